"""Augment motion capture trials with a virtual grasped object.

Hand frames from dorsal hand and wrist markers carry virtual object markers;
rigid registration gives the object pose, Newton-Euler gives the wrench the
hand applies, and the Jacobian transpose maps it to joint torques.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DegenerateGeometryError, IncompleteFrameError, ObjaugError

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    "DegenerateGeometryError",
    "IncompleteFrameError",
    "ObjaugError",
]
