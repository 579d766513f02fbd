"""Marker trajectory files, configuration files and result tables.

Internally every quantity is SI. TRC files in millimetres are scaled by
exactly 1e-3 on read and 1e3 on write. Missing marker cells are carried as
flags (NaN coordinates plus a boolean mask), never interpolated.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IncompleteFrameError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

UNIFORM_DT_TOL = 1e-9
# Time columns printed with limited precision are snapped to the DataRate grid
# when every sample lies within this distance of it.
TRC_TIME_SNAP_TOL = 1e-5

_UNIT_SCALE = {"mm": 1e-3, "m": 1.0}


@dataclass(frozen=True)
class MarkerSeries:
    """Labelled 3-D marker positions on a uniform time grid.

    ``positions`` has shape (frames, markers, 3) in metres. Missing cells are
    NaN and flagged in :attr:`missing`.
    """

    labels: tuple[str, ...]
    times: np.ndarray
    positions: np.ndarray
    sample_rate: float

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        times = np.asarray(self.times, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)
        if not labels or any(not lab for lab in labels):
            raise DataError("marker labels must be non-empty")
        if len(set(labels)) != len(labels):
            dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
            raise DataError(f"duplicate marker labels: {', '.join(dupes)}")
        if times.ndim != 1 or times.size == 0:
            raise DataError("no frames")
        if pos.shape != (times.size, len(labels), 3):
            raise DataError(
                f"positions shape {pos.shape} does not match {times.size} frames x {len(labels)} markers"
            )
        if np.isinf(pos).any() or not np.isfinite(times).all():
            raise DataError("non-finite coordinates")
        if times.size > 1:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise DataError("time column is not strictly increasing")
            dt = 1.0 / self.sample_rate
            if np.max(np.abs(steps - dt)) >= UNIFORM_DT_TOL:
                raise DataError("time column is not uniformly sampled at the stated sample rate")

    @property
    def n_frames(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.positions).any(axis=-1)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"marker {label!r} not in series") from None

    def marker(self, label: str) -> np.ndarray:
        return self.positions[:, self.index(label)]

    def select(self, labels, require_complete: bool = True) -> np.ndarray:
        """Positions of ``labels`` as (frames, len(labels), 3).

        With ``require_complete`` the first frame lacking any of the labels
        raises :class:`IncompleteFrameError`.
        """
        idx = [self.index(lab) for lab in labels]
        pts = self.positions[:, idx]
        if require_complete:
            miss = np.isnan(pts).any(axis=-1)
            bad = np.flatnonzero(miss.any(axis=1))
            if bad.size:
                i = int(bad[0])
                raise IncompleteFrameError(i, [labels[j] for j in np.flatnonzero(miss[i])])
        return pts

    def with_positions(self, positions, labels=None) -> "MarkerSeries":
        return MarkerSeries(
            labels=self.labels if labels is None else tuple(labels),
            times=self.times,
            positions=positions,
            sample_rate=self.sample_rate,
        )


def uniform_times(n_frames: int, sample_rate: float, start: float = 0.0) -> np.ndarray:
    return start + np.arange(n_frames) / sample_rate


def _as_text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return data.decode("utf-8-sig")
    return str(data)


def _float_cell(cell: str, where: str) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() == "nan":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at {where}") from None


# ---------------------------------------------------------------------------
# TRC


def parse_trc(text) -> MarkerSeries:
    """Parse a tab-delimited TRC export (5 header lines, mm or m)."""
    lines = _as_text(text).splitlines()
    if len(lines) < 5:
        raise DataError("malformed TRC header: expected 5 header lines")
    keys = lines[1].split("\t")
    vals = lines[2].split("\t")
    meta = {k.strip(): v.strip() for k, v in zip(keys, vals) if k.strip()}
    for key in ("DataRate", "NumFrames", "NumMarkers", "Units"):
        if key not in meta:
            raise DataError(f"malformed TRC header: missing {key}")
    try:
        rate = float(meta["DataRate"])
        n_markers = int(meta["NumMarkers"])
        n_frames_hdr = int(meta["NumFrames"])
    except ValueError:
        raise DataError("malformed TRC header: non-numeric metadata") from None
    if rate <= 0 or n_markers <= 0:
        raise DataError("malformed TRC header: DataRate and NumMarkers must be positive")
    units = meta["Units"]
    if units not in _UNIT_SCALE:
        raise DataError(f"unsupported unit {units!r} (expected mm or m)")
    scale = _UNIT_SCALE[units]

    name_cells = lines[3].split("\t")
    if len(name_cells) < 2 or name_cells[0].strip() != "Frame#":
        raise DataError("malformed TRC header: marker name row must start with Frame#")
    labels = [c.strip() for c in name_cells[2:] if c.strip()]
    if len(labels) != n_markers:
        raise DataError(f"column mismatch: NumMarkers={n_markers} but {len(labels)} marker names")

    rows = [ln for ln in lines[5:] if ln.strip()]
    if not rows:
        raise DataError("no frames")
    times = []
    pos = np.empty((len(rows), n_markers, 3))
    for r, line in enumerate(rows):
        cells = line.rstrip("\n").split("\t")
        while cells and cells[-1].strip() == "" and len(cells) > 2 + 3 * n_markers:
            cells.pop()
        if len(cells) != 2 + 3 * n_markers:
            raise DataError(
                f"column mismatch in data row {r}: NumMarkers={n_markers} needs "
                f"{3 * n_markers} coordinates, found {len(cells) - 2}"
            )
        t = _float_cell(cells[1], f"row {r} time")
        if math.isnan(t):
            raise DataError(f"missing time in row {r}")
        times.append(t)
        for j in range(3 * n_markers):
            pos[r, j // 3, j % 3] = _float_cell(cells[2 + j], f"row {r} column {2 + j}")
    if n_frames_hdr != len(rows):
        raise DataError(f"NumFrames={n_frames_hdr} but {len(rows)} data rows")
    times = np.asarray(times)
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise DataError("time column is not strictly increasing")
    grid = uniform_times(times.size, rate, times[0])
    if np.max(np.abs(times - grid)) > TRC_TIME_SNAP_TOL:
        raise DataError("time column inconsistent with DataRate")
    return MarkerSeries(tuple(labels), grid, pos * scale, rate)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_trc(series: MarkerSeries, units: str = "mm", name: str = "markers.trc") -> str:
    """Serialise to TRC text. Coordinates are written with round-trip precision."""
    if units not in _UNIT_SCALE:
        raise DataError(f"unsupported unit {units!r} (expected mm or m)")
    inv = {"mm": 1e3, "m": 1.0}[units]
    n, k = series.n_frames, len(series.labels)
    rate = repr(float(series.sample_rate))
    out = [
        f"PathFileType\t4\t(X/Y/Z)\t{name}",
        "DataRate\tCameraRate\tNumFrames\tNumMarkers\tUnits\tOrigDataRate\tOrigDataStartFrame\tOrigNumFrames",
        f"{rate}\t{rate}\t{n}\t{k}\t{units}\t{rate}\t1\t{n}",
        "Frame#\tTime\t" + "\t".join(f"{lab}\t\t" for lab in series.labels).rstrip("\t"),
        "\t\t" + "\t".join(f"X{i + 1}\tY{i + 1}\tZ{i + 1}" for i in range(k)),
    ]
    pos = series.positions * inv
    for i in range(n):
        cells = [str(i + 1), repr(float(series.times[i]))]
        cells += [_fmt(x) for x in pos[i].ravel()]
        out.append("\t".join(cells))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# CSV marker schema: time,<label>_x,<label>_y,<label>_z,...


def parse_marker_csv(text) -> MarkerSeries:
    reader = list(csv.reader(io.StringIO(_as_text(text))))
    reader = [row for row in reader if row and any(c.strip() for c in row)]
    if not reader:
        raise DataError("empty marker CSV")
    header = [c.strip() for c in reader[0]]
    if not header or header[0] != "time":
        raise DataError("marker CSV must start with a 'time' column")
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"duplicate columns: {', '.join(dupes)}")
    cols = header[1:]
    if len(cols) % 3:
        raise DataError("marker CSV needs x/y/z triplets per marker")
    labels = []
    for j in range(0, len(cols), 3):
        trip = cols[j : j + 3]
        base = trip[0][:-2]
        if trip != [f"{base}_x", f"{base}_y", f"{base}_z"] or not base:
            raise DataError(f"columns {trip} are not a <label>_x,_y,_z triplet")
        labels.append(base)
    rows = reader[1:]
    if not rows:
        raise DataError("no frames")
    n_cols = len(header)
    data = np.empty((len(rows), n_cols))
    for r, row in enumerate(rows):
        if len(row) != n_cols:
            raise DataError(f"ragged row {r}: expected {n_cols} cells, found {len(row)}")
        for c, cell in enumerate(row):
            data[r, c] = _float_cell(cell, f"row {r} column {header[c]!r}")
    times = data[:, 0]
    if np.isnan(times).any():
        raise DataError("missing time value")
    if times.size > 1:
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise DataError("time column is not strictly increasing")
        rate = 1.0 / float(np.median(steps))
    else:
        raise DataError("need at least two frames to infer the sample rate")
    pos = data[:, 1:].reshape(len(rows), len(labels), 3)
    return MarkerSeries(tuple(labels), times, pos, rate)


def write_marker_csv(series: MarkerSeries) -> str:
    header = ["time"] + [f"{lab}_{ax}" for lab in series.labels for ax in "xyz"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(series.n_frames):
        w.writerow([repr(float(series.times[i]))] + [_fmt(x) for x in series.positions[i].ravel()])
    return buf.getvalue()


def read_markers(path) -> MarkerSeries:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".trc":
        return parse_trc(data)
    if path.suffix.lower() == ".csv":
        return parse_marker_csv(data)
    raise ConfigError(f"unsupported marker file type {path.suffix!r} ({path}); use .trc or .csv")


# ---------------------------------------------------------------------------
# Generic numeric tables (pose, wrench, torque, joint files)


def write_table(path, columns: list[str], data) -> None:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ValueError(f"table shape {data.shape} does not match {len(columns)} columns")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in data:
        w.writerow([_fmt(x) for x in row])
    Path(path).write_text(buf.getvalue())


def read_table(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing table {path}")
    rows = [r for r in csv.reader(io.StringIO(path.read_text())) if r]
    if not rows:
        raise DataError(f"empty table {path}")
    header = [c.strip() for c in rows[0]]
    data = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DataError(f"{path.name}: ragged row {r}")
        for c, cell in enumerate(row):
            data[r, c] = _float_cell(cell, f"{path.name} row {r}")
    return header, data


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# TOML configuration


def read_toml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def check_keys(table: dict, required: set, optional: set, where: str) -> None:
    unknown = sorted(set(table) - required - optional)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {', '.join(unknown)}")
    missing = sorted(required - set(table))
    if missing:
        raise ConfigError(f"{where}: missing required keys {', '.join(missing)}")


def builtin_path(kind: str, name: str) -> Path:
    """Path of a packaged config (``kind`` in objects/limbs/grasps)."""
    ref = resources.files("objaug") / "data" / kind / f"{name}.toml"
    path = Path(str(ref))
    if not path.is_file():
        available = sorted(p.stem for p in Path(str(resources.files("objaug") / "data" / kind)).glob("*.toml"))
        raise ConfigError(f"no builtin {kind[:-1]} named {name!r} (available: {', '.join(available)})")
    return path


def resolve_config(ref: str, kind: str, base: Path | None = None) -> Path:
    """A file path (absolute or relative to ``base``) or a builtin name."""
    candidate = Path(ref)
    if not candidate.is_absolute() and base is not None:
        candidate = base / candidate
    if candidate.suffix == ".toml" or candidate.exists():
        if not candidate.is_file():
            raise ConfigError(f"{kind[:-1]} file not found: {candidate}")
        return candidate
    return builtin_path(kind, ref)


def load_object_spec(path):
    from .virtual_object import object_model_from_dict

    path = Path(path)
    return object_model_from_dict(read_toml(path), where=str(path))


def load_limb_spec(path):
    from .limb_dynamics import limb_model_from_dict

    path = Path(path)
    return limb_model_from_dict(read_toml(path), where=str(path))


@dataclass(frozen=True)
class FilterSettings:
    enabled: bool = True
    cutoff_hz: float = 6.0
    order: int = 3


@dataclass
class TrialConfig:
    """Inputs of one augmentation run.

    ``wrist_marker_labels`` is ordered (ulnar, radial); the wrist vector points
    from the first to the second.
    """

    markers_path: Path
    joints_path: Path
    hand_marker_labels: tuple[str, ...]
    wrist_marker_labels: tuple[str, str]
    object_ref: str
    limb_ref: str
    deviation_angle_column: str = "q_WD"
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    palm_thickness: float | None = None
    filter: FilterSettings = field(default_factory=FilterSettings)
    placement: str = "hand_frame"
    torque_attach: str = "com"
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        self.hand_marker_labels = tuple(self.hand_marker_labels)
        self.wrist_marker_labels = tuple(self.wrist_marker_labels)
        if len(self.hand_marker_labels) < 3:
            raise ConfigError("need at least 3 hand markers")
        if len(set(self.hand_marker_labels)) != len(self.hand_marker_labels):
            raise ConfigError("duplicate hand marker labels")
        if len(self.wrist_marker_labels) != 2:
            raise ConfigError("need exactly 2 wrist markers (ulnar, radial)")
        if set(self.hand_marker_labels) & set(self.wrist_marker_labels):
            raise ConfigError("hand and wrist marker labels must be disjoint")
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.gravity.shape != (3,):
            raise ConfigError("gravity must be a 3-vector")
        if self.placement not in ("hand_frame", "literal"):
            raise ConfigError(f"placement must be 'hand_frame' or 'literal', got {self.placement!r}")
        if self.torque_attach not in ("com", "end_effector_untransported"):
            raise ConfigError(f"torque_attach must be 'com' or 'end_effector_untransported', got {self.torque_attach!r}")
        if self.palm_thickness is not None and self.palm_thickness <= 0:
            raise ConfigError("palm_thickness must be positive")
        if self.filter.cutoff_hz <= 0 or self.filter.order < 1:
            raise ConfigError("filter cutoff must be positive and order >= 1")

    def snapshot(self) -> dict:
        return {
            "markers": str(self.markers_path),
            "joints": str(self.joints_path),
            "hand_markers": list(self.hand_marker_labels),
            "wrist_markers": list(self.wrist_marker_labels),
            "object": self.object_ref,
            "limb": self.limb_ref,
            "deviation_angle": self.deviation_angle_column,
            "gravity": [float(g) for g in self.gravity],
            "palm_thickness": self.palm_thickness,
            "filter": {"enabled": self.filter.enabled, "cutoff_hz": self.filter.cutoff_hz, "order": self.filter.order},
            "placement": self.placement,
            "torque_attach": self.torque_attach,
        }


_TRIAL_REQUIRED = {"markers", "joints", "hand_markers", "wrist_markers", "object", "limb"}
_TRIAL_OPTIONAL = {"deviation_angle", "gravity", "palm_thickness", "filter", "placement", "torque_attach"}


def load_trial_config(path) -> TrialConfig:
    path = Path(path)
    raw = read_toml(path)
    where = str(path)
    check_keys(raw, _TRIAL_REQUIRED, _TRIAL_OPTIONAL, where)
    filt = raw.get("filter", {})
    check_keys(filt, set(), {"enabled", "cutoff_hz", "order"}, f"{where} [filter]")
    base = path.parent
    return TrialConfig(
        markers_path=base / raw["markers"],
        joints_path=base / raw["joints"],
        hand_marker_labels=raw["hand_markers"],
        wrist_marker_labels=raw["wrist_markers"],
        object_ref=raw["object"],
        limb_ref=raw["limb"],
        deviation_angle_column=raw.get("deviation_angle", "q_WD"),
        gravity=np.array(raw.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
        palm_thickness=raw.get("palm_thickness"),
        filter=FilterSettings(
            enabled=bool(filt.get("enabled", True)),
            cutoff_hz=float(filt.get("cutoff_hz", 6.0)),
            order=int(filt.get("order", 3)),
        ),
        placement=raw.get("placement", "hand_frame"),
        torque_attach=raw.get("torque_attach", "com"),
        base_dir=base,
    )
