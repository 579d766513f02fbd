"""Virtual objects: marker placement in hand frames, filtering, pose fitting
and pose differentiation (phases 2 and 3 of the augmentation pipeline).

Placement coordinates ``c`` are expressed along the hand basis (n, p, f) after
the object tilt about ``n``. Object body coordinates are placement
coordinates relative to the CoM, re-expressed along the principal axes given
by ``body_axes`` (columns = body x, y, z in placement coordinates).
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ConfigError, DataError, DegenerateGeometryError
from .geometry import log_so3, rot_x
from .hand_frame import HandFrame, HandFrameSeries
from .mocap_io import MarkerSeries, builtin_path, check_keys, read_toml
from .numdiff import derivative, fd_weights, stencil

BUILTIN_OBJECTS = ("can", "bottle", "drill")
SHAPES = ("cylinder", "cylinder_on_cuboid")

# ---------------------------------------------------------------------------
# Object model

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def eval_coordinate(expr, symbols: dict) -> float:
    """Evaluate a coordinate such as ``"r+H"`` or ``"h/2"`` (numbers, symbols, + - * /)."""
    if isinstance(expr, (int, float)):
        return float(expr)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in symbols or symbols[node.id] is None:
                raise ConfigError(f"unknown symbol {node.id!r} in coordinate {expr!r}")
            return float(symbols[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"unsupported coordinate expression {expr!r}")

    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError:
        raise ConfigError(f"cannot parse coordinate expression {expr!r}") from None
    return ev(tree)


@dataclass(frozen=True)
class ObjectModel:
    name: str
    shape: str
    radius: float
    height: float
    mass: float
    inertia: tuple[float, float, float]
    tilt: float
    palm_thickness: float
    marker_exprs: dict = field(default_factory=dict)
    length: float | None = None
    com_marker: str = "VM_c"
    body_axes: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"{self.name}: shape must be one of {SHAPES}, got {self.shape!r}")
        if not self.mass > 0:
            raise ConfigError(f"{self.name}: mass must be positive")
        for label, val in (("radius", self.radius), ("height", self.height), ("palm_thickness", self.palm_thickness)):
            if not val > 0:
                raise ConfigError(f"{self.name}: {label} must be positive")
        if self.shape == "cylinder_on_cuboid" and not (self.length is not None and self.length > 0):
            raise ConfigError(f"{self.name}: length must be positive for cylinder_on_cuboid")
        I = tuple(float(v) for v in self.inertia)
        object.__setattr__(self, "inertia", I)
        if len(I) != 3 or min(I) <= 0:
            raise ConfigError(f"{self.name}: principal inertias must be three positive values")
        a, b, c = I
        if a > b + c or b > a + c or c > a + b:
            raise ConfigError(f"{self.name}: principal inertias violate the triangle inequality")
        A = np.asarray(self.body_axes, dtype=float)
        if A.shape != (3, 3) or np.abs(A.T @ A - np.eye(3)).max() > 1e-9 or np.linalg.det(A) < 0:
            raise ConfigError(f"{self.name}: body_axes must be a proper rotation matrix")
        object.__setattr__(self, "body_axes", A)
        if self.com_marker not in self.marker_exprs:
            raise ConfigError(f"{self.name}: CoM marker {self.com_marker!r} not among virtual markers")
        pts = np.array(list(self.markers.values()))
        if len(pts) < 3:
            raise ConfigError(f"{self.name}: need at least 3 virtual markers")
        s = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
        if s[1] < 1e-9 * s[0]:
            raise ConfigError(f"{self.name}: virtual markers are collinear; pose is unobservable")

    @property
    def symbols(self) -> dict:
        return {"r": self.radius, "h": self.height, "l": self.length, "H": self.palm_thickness}

    @property
    def markers(self) -> dict[str, np.ndarray]:
        """Placement coordinates of every virtual marker (metres)."""
        sym = self.symbols
        return {name: np.array([eval_coordinate(e, sym) for e in exprs]) for name, exprs in self.marker_exprs.items()}

    @property
    def marker_names(self) -> tuple[str, ...]:
        return tuple(self.marker_exprs)

    @property
    def com_placement(self) -> np.ndarray:
        return self.markers[self.com_marker]

    def local_coords(self) -> np.ndarray:
        """Marker coordinates in the body frame (origin at CoM), in marker order."""
        c = np.array(list(self.markers.values()))
        return (c - self.com_placement) @ self.body_axes

    def inertia_tensor(self) -> np.ndarray:
        return np.diag(self.inertia)

    def with_palm_thickness(self, palm_thickness: float) -> "ObjectModel":
        return replace(self, palm_thickness=float(palm_thickness))


_OBJECT_REQUIRED = {"name", "shape", "radius", "height", "mass", "inertia", "tilt_deg", "palm_thickness", "markers"}
_OBJECT_OPTIONAL = {"length", "com_marker", "body_axes"}


def object_model_from_dict(raw: dict, where: str = "object spec") -> ObjectModel:
    check_keys(raw, _OBJECT_REQUIRED, _OBJECT_OPTIONAL, where)
    markers = raw["markers"]
    if not isinstance(markers, dict):
        raise ConfigError(f"{where}: [markers] must be a table of name = [x, y, z]")
    exprs = {}
    for name, coords in markers.items():
        if not isinstance(coords, list) or len(coords) != 3:
            raise ConfigError(f"{where}: marker {name!r} needs 3 coordinates")
        exprs[name] = tuple(coords)
    body_axes = raw.get("body_axes")
    # body_axes rows in the file are body x, y, z; stored as columns.
    A = np.eye(3) if body_axes is None else np.asarray(body_axes, dtype=float).T
    try:
        return ObjectModel(
            name=str(raw["name"]),
            shape=str(raw["shape"]),
            radius=float(raw["radius"]),
            height=float(raw["height"]),
            length=None if raw.get("length") is None else float(raw["length"]),
            mass=float(raw["mass"]),
            inertia=tuple(raw["inertia"]),
            tilt=math.radians(float(raw["tilt_deg"])),
            palm_thickness=float(raw["palm_thickness"]),
            marker_exprs=exprs,
            com_marker=str(raw.get("com_marker", "VM_c")),
            body_axes=A,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def builtin_objects(palm_thickness: float) -> dict[str, ObjectModel]:
    """The can, bottle and drill models with the given palm thickness substituted."""
    if not palm_thickness > 0:
        raise ConfigError("palm_thickness must be positive")
    out = {}
    for name in BUILTIN_OBJECTS:
        path = builtin_path("objects", name)
        out[name] = object_model_from_dict(read_toml(path), str(path)).with_palm_thickness(palm_thickness)
    return out


def load_object(ref: str, base: Path | None = None, palm_thickness: float | None = None) -> ObjectModel:
    """Builtin name or TOML path; ``palm_thickness`` overrides the file value."""
    from .mocap_io import resolve_config

    path = resolve_config(ref, "objects", base)
    model = object_model_from_dict(read_toml(path), str(path))
    if palm_thickness is not None:
        model = model.with_palm_thickness(palm_thickness)
    return model


# ---------------------------------------------------------------------------
# Placement


def placement_rotation(basis, model: ObjectModel, literal: bool = False) -> np.ndarray:
    """World rotation of the placement frame for hand basis ``basis`` (..., 3, 3).

    The default applies the tilt inside the hand frame (``B @ Rx``), which keeps
    placement equivariant under rigid motion. ``literal`` left-multiplies the
    tilt onto the basis (``Rx @ B``) instead.
    """
    Rx = rot_x(model.tilt)
    return Rx @ basis if literal else basis @ Rx


def object_pose_from_frames(origin, basis, model: ObjectModel, literal: bool = False):
    """Body rotation and CoM position implied by the hand frames."""
    P = placement_rotation(basis, model, literal)
    R = P @ model.body_axes
    com = origin + np.einsum("...ij,j->...i", P, model.com_placement)
    return R, com


def place_virtual_markers(frame: HandFrame, model: ObjectModel, literal: bool = False) -> dict[str, np.ndarray]:
    P = placement_rotation(frame.basis, model, literal)
    return {name: frame.origin + P @ c for name, c in model.markers.items()}


def place_virtual_marker_series(
    frames: HandFrameSeries, model: ObjectModel, sample_rate: float, literal: bool = False
) -> MarkerSeries:
    P = placement_rotation(frames.basis, model, literal)
    c = np.array(list(model.markers.values()))
    pos = frames.origin[:, None, :] + np.einsum("nij,kj->nki", P, c)
    return MarkerSeries(model.marker_names, frames.times, pos, sample_rate)


def apply_marker_offset(series: MarkerSeries, distance: float, direction) -> MarkerSeries:
    """Translate every marker by ``distance`` along the per-frame unit ``direction``."""
    if distance < 0:
        raise DataError("offset distance must be non-negative")
    d = np.asarray(direction, dtype=float)
    if d.ndim == 1:
        d = np.broadcast_to(d, (series.n_frames, 3))
    if d.shape != (series.n_frames, 3):
        raise DataError(f"offset directions shape {d.shape} does not match {series.n_frames} frames")
    return series.with_positions(series.positions + distance * d[:, None, :])


# ---------------------------------------------------------------------------
# Filtering


def lowpass_filter(series: MarkerSeries, cutoff: float = 6.0, order: int = 3) -> MarkerSeries:
    """Zero-phase (forward-backward) Butterworth low pass on every coordinate channel.

    Edges are padded by odd reflection over ``3 * (order + 1)`` samples.
    """
    nyquist = 0.5 * series.sample_rate
    if not 0 < cutoff < nyquist:
        raise DataError(f"cutoff {cutoff} Hz must lie below the Nyquist frequency {nyquist} Hz")
    if series.missing.any():
        i = int(np.flatnonzero(series.missing.any(axis=1))[0])
        raise DataError(f"cannot filter incomplete data (first gap at frame {i})")
    padlen = 3 * (order + 1)
    if series.n_frames <= padlen:
        raise DataError(f"need more than {padlen} frames to filter")
    b, a = signal.butter(order, cutoff / nyquist)
    flat = series.positions.reshape(series.n_frames, -1)
    out = signal.filtfilt(b, a, flat, axis=0, padtype="odd", padlen=padlen)
    return series.with_positions(out.reshape(series.positions.shape))


# ---------------------------------------------------------------------------
# Pose fitting


def fit_object_pose(local_coords, world_points, weights=None):
    """Weighted least-squares rigid registration (rotation + translation, no scale).

    Minimises ``sum w_i |R c_i + t - x_i|^2``. Returns ``(R, t, residuals)``
    with per-marker residual distances. Inputs may carry a leading frame axis
    on ``world_points``.
    """
    c = np.asarray(local_coords, dtype=float)
    x = np.asarray(world_points, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    k = c.shape[0]
    if c.shape != (k, 3) or x.shape[1:] != (k, 3):
        raise DataError("local and world point sets must both be (markers, 3)")
    if k < 3:
        raise DegenerateGeometryError("need at least 3 markers to fit a pose")
    w = np.ones(k) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (k,) or np.any(w <= 0):
        raise DataError("weights must be positive, one per marker")
    w = w / w.sum()
    c_bar = w @ c
    cc = c - c_bar
    sv = np.linalg.svd(cc, compute_uv=False)
    if sv[1] < 1e-9 * sv[0]:
        raise DegenerateGeometryError("local marker coordinates are collinear; pose is unobservable")
    x_bar = np.einsum("k,nkj->nj", w, x)
    xc = x - x_bar[:, None, :]
    H = np.einsum("k,ki,nkj->nij", w, cc, xc)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(np.swapaxes(Vt, 1, 2) @ np.swapaxes(U, 1, 2)))
    d[d == 0] = 1.0
    D = np.zeros((len(x), 3, 3))
    D[:, 0, 0] = 1.0
    D[:, 1, 1] = 1.0
    D[:, 2, 2] = d
    R = np.swapaxes(Vt, 1, 2) @ D @ np.swapaxes(U, 1, 2)
    t = x_bar - np.einsum("nij,j->ni", R, c_bar)
    fitted = np.einsum("nij,kj->nki", R, c) + t[:, None, :]
    res = np.linalg.norm(fitted - x, axis=2)
    if single:
        return R[0], t[0], res[0]
    return R, t, res


@dataclass(frozen=True)
class PoseSeries:
    """Object body pose per frame; ``translations`` is the CoM position."""

    times: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    sample_rate: float
    residuals: np.ndarray | None = None
    marker_labels: tuple[str, ...] = ()

    def __len__(self):
        return self.times.size

    @property
    def max_residual(self) -> np.ndarray:
        return self.residuals.max(axis=1)

    @property
    def rms_residual(self) -> np.ndarray:
        return np.sqrt(np.mean(self.residuals**2, axis=1))


def solve_object_ik(vm_series: MarkerSeries, model: ObjectModel, weights=None) -> PoseSeries:
    """Fit the object body frame to the virtual markers in every frame."""
    labels = list(model.marker_names)
    world = vm_series.select(labels)
    R, t, res = fit_object_pose(model.local_coords(), world, weights)
    return PoseSeries(vm_series.times.copy(), R, t, vm_series.sample_rate, res, tuple(labels))


# ---------------------------------------------------------------------------
# Differentiation


@dataclass(frozen=True)
class KinematicState:
    """World-frame CoM velocity/acceleration and body angular velocity/acceleration."""

    v: np.ndarray
    a: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray


def _angular_velocity(R: np.ndarray, dt: float, accuracy: int) -> np.ndarray:
    n = R.shape[0]
    omega = np.empty((n, 3))
    half = accuracy // 2
    interior = slice(half, n - half)
    if n > 2 * half:
        # log(R[i+1] R[i-1]^T) / 2dt, Richardson-extrapolated for accuracy 4
        step1 = log_so3(R[2:] @ np.swapaxes(R[:-2], 1, 2)) / (2 * dt)
        if accuracy == 2:
            omega[interior] = step1
        elif accuracy == 4:
            step2 = log_so3(R[4:] @ np.swapaxes(R[:-4], 1, 2)) / (4 * dt)
            omega[interior] = (4.0 * step1[1:-1] - step2) / 3.0
        else:
            raise ValueError("accuracy must be 2 or 4")
        edges = list(range(half)) + list(range(n - half, n))
    else:
        edges = range(n)
    for i in edges:
        # derivative at t_i of log(R(t) R_i^T), whose slope there is omega_i
        offs = stencil(i, n, 1, accuracy)
        w = fd_weights(offs, 1)
        phi = log_so3(R[[i + s for s in offs]] @ R[i].T)
        omega[i] = w @ phi / dt
    return omega


def differentiate_pose(pose: PoseSeries, accuracy: int = 4) -> KinematicState:
    """Finite-difference twist and its rate for a uniformly sampled pose series.

    ``accuracy=2`` uses second-order central differences, with
    ``omega = log(R[i+1] R[i-1]^T) / 2dt``; ``accuracy=4`` Richardson-extrapolates
    the same central estimates to fourth order. Ends use one-sided stencils.
    """
    n = len(pose)
    if n < 3:
        raise DataError("need at least 3 frames to differentiate a pose series")
    if accuracy not in (2, 4):
        raise ValueError("accuracy must be 2 or 4")
    dt = 1.0 / pose.sample_rate
    v = derivative(pose.translations, dt, 1, accuracy)
    a = derivative(pose.translations, dt, 2, accuracy)
    omega = _angular_velocity(pose.rotations, dt, accuracy)
    omega_dot = derivative(omega, dt, 1, accuracy)
    return KinematicState(v, a, omega, omega_dot)
