"""Emit a small question answering dataset from game states.

Collects states from the walkthrough plus random rollouts and prints the
first few records in the flat text format.

Run with: python demos/emit_qa_dataset.py [game] [n_states]
"""

import sys

from questkg import extraction, games
from questkg.cli import collect_qa_states


def main():
    name = sys.argv[1] if len(sys.argv) > 1 else "miniz"
    budget = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    game = games.load_path(name)
    records = collect_qa_states(game, budget, seed=0)
    text = extraction.emit_qa_dataset(records)
    print(text)
    parsed = extraction.parse_qa_dataset(text)
    total_qa = sum(len(qa) for _, qa in parsed)
    print(f"\n# {len(parsed)} records, {total_qa} question-answer pairs; "
          "round-trip parse ok")


if __name__ == "__main__":
    main()
