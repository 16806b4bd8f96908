"""Inspect the quest structure of each bundled game.

Prints the dependency levels, the detected bottleneck vertices, and the
size of the grounded action space.

Run with: python demos/quest_analysis.py
"""

from questkg import engine, games
from questkg.questgraph import bottlenecks, topological_levels


def main():
    for name in games.BUNDLED:
        game = games.load_bundled(name)
        if game.dag is None:
            print(f"=== {name}: no quest graph authored ===\n")
            continue
        print(f"=== {name} (max score {game.max_score}) ===")
        levels = topological_levels(game.dag)
        for depth, level in enumerate(levels):
            print(f"  level {depth}: {' '.join(sorted(level))}")
        necks = bottlenecks(game.dag)
        print(f"  bottlenecks: {' '.join(sorted(necks)) or '(none)'}")
        count, _ = engine.enumerate_grounded(game, game.entities)
        print(f"  grounded actions over the full vocabulary: {count}\n")


if __name__ == "__main__":
    main()
