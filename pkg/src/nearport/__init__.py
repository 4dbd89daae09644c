"""nearport: remote real-time rendering with pose streaming and latency metrics.

Clients stream labeled, timestamped camera poses; the server keeps only the
freshest pose per viewpoint in a single-slot mailbox, renders it with a
pluggable volume renderer, and streams frames back with the pose timestamp
echoed so round-trip latency is a one-clock subtraction.
"""

from importlib.resources import files as _files
from pathlib import Path as _Path

__version__ = "0.1.0"


def bundled_scene(name: str) -> _Path:
    """Path of a scene shipped with the package, e.g. bundled_scene('box.scene')."""
    return _Path(str(_files("nearport") / "scenes" / name))
