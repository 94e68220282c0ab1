"""avatarkit: rig and animate implicit-surface avatars.

A static avatar (signed-distance + color fields) plus one set of 2D facial
landmarks becomes a riggable character: expressions transfer from driver
landmark motion through per-part frames and a Delaunay space warp; head and
torso pose through cage transforms with a warped neck band; frames render
by sphere tracing the deformed field.
"""

from .backend import active_backend
from .errors import (AnimateIOError, AvatarError, DegeneratePartError,
                     ProjectionIncompleteError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "active_backend",
    "AvatarError",
    "ValidationError",
    "ProjectionIncompleteError",
    "DegeneratePartError",
    "AnimateIOError",
]
