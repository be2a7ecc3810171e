"""
Packaged MSL programs: the three baseline strategies and the adaptive
validity model.
"""
from functools import lru_cache
from pathlib import Path

from discovery import exceptions
from discovery.msl.parser import parse

PROGRAMS_DIR = Path(__file__).resolve().parent / "programs"
BASELINE_NAMES = ("wadd", "ttb", "eqw")


@lru_cache(maxsize=None)
def program_library() -> dict:
    """All packaged programs by name (file stem)."""
    return {
        path.stem: parse(path.read_text(encoding="utf-8"))
        for path in sorted(PROGRAMS_DIR.glob("*.msl"))
    }


def baselines() -> dict:
    library = program_library()
    return {name: library[name] for name in BASELINE_NAMES}


def get_program(name: str):
    try:
        return program_library()[name]
    except KeyError:
        raise exceptions.ValidationError(
            f"unknown model {name!r}; packaged models: "
            f"{', '.join(program_library())}"
        ) from None
