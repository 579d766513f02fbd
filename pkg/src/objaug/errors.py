"""Exception hierarchy.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`DataError` to
exit code 3; anything else is an internal failure.
"""


class ObjaugError(Exception):
    """Base class for all package errors."""


class ConfigError(ObjaugError, ValueError):
    """Invalid or missing configuration (object, limb, grasp or trial files)."""


class DataError(ObjaugError, ValueError):
    """Input data that cannot be processed (malformed files, bad geometry)."""


class DegenerateGeometryError(DataError):
    """Marker geometry does not determine the requested quantity."""


class IncompleteFrameError(DataError):
    def __init__(self, frame: int, missing: list[str]):
        self.frame = frame
        self.missing = list(missing)
        super().__init__(f"frame {frame}: missing required markers {', '.join(self.missing)}")
