"""Locate the scenario and machine files shipped inside the package."""

from __future__ import annotations

from pathlib import Path

DATA = Path(__file__).parent / "data"


def bundled_path(name: str) -> Path:
    """Path of a shipped file such as ``caseA.scenario`` or ``stinger.machine``."""
    path = DATA / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled file {name!r} (have: "
                                f"{', '.join(sorted(p.name for p in DATA.iterdir()))})")
    return path
