"""Access to the bundled mini-games."""

from importlib import resources

from .gamedef import load_game

BUNDLED = ("miniz", "chainworld", "deceive")


def bundled_game_text(name):
    if name not in BUNDLED:
        raise KeyError(f"no bundled game named {name!r}")
    return resources.files("questkg.data").joinpath(f"{name}.game").read_text()


def load_bundled(name):
    return load_game(bundled_game_text(name))


def load_path(path):
    """Load a game from a file path or a bundled name."""
    import os
    if os.path.exists(path):
        with open(path) as fh:
            return load_game(fh.read())
    if path in BUNDLED:
        return load_bundled(path)
    raise FileNotFoundError(path)
