"""Error statistics, torque-case comparison and the marker-placement sensitivity study."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigError, DataError

MAX_REJECTION_ATTEMPTS = 100_000


class UndefinedCorrelationError(DataError):
    """Pearson r requested for a constant series."""


# ---------------------------------------------------------------------------
# Basic statistics


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DataError(f"series shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l2_error_series(a, b) -> np.ndarray:
    """Per-frame Euclidean distance between two (frames, 3) point series."""
    a, b = _pair(a, b)
    return np.linalg.norm(a - b, axis=-1)


def l1_error_series(a, b) -> np.ndarray:
    a, b = _pair(a, b)
    return np.abs(a - b)


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x**2)))


def max_abs(x) -> float:
    return float(np.max(np.abs(np.asarray(x, dtype=float))))


def mean_sd(x) -> tuple[float, float]:
    """Mean and population standard deviation."""
    x = np.asarray(x, dtype=float)
    return float(np.mean(x)), float(np.std(x))


def pearson_r(x, y) -> float:
    x, y = _pair(x, y)
    if x.ndim != 1 or x.size < 2:
        raise DataError("pearson_r needs two 1-D series of length >= 2")
    # constant input is detected exactly; the centred values may carry roundoff
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance series")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.mean(dx**2))
    sy = np.sqrt(np.mean(dy**2))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance series")
    r = np.mean(dx * dy) / (sx * sy)
    return float(np.clip(r, -1.0, 1.0))


def percentile_contribution(tau_obj, tau_limb, q: float) -> float:
    """``100 * percentile_q(tau_obj) / percentile_q(tau_limb)``, signed."""
    denom = np.percentile(np.asarray(tau_limb, dtype=float), q)
    if denom == 0:
        return float("nan")
    return float(100.0 * np.percentile(np.asarray(tau_obj, dtype=float), q) / denom)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class ErrorReport:
    """One row per channel (a marker or a joint)."""

    kind: str
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        return list(self.rows[0]) if self.rows else []

    def as_table(self) -> tuple[list[str], list[list]]:
        cols = self.columns()
        return cols, [[row[c] for c in cols] for row in self.rows]

    def row(self, channel: str) -> dict:
        for r in self.rows:
            if r["channel"] == channel:
                return r
        raise KeyError(channel)


def _r_or_nan(x, y) -> float:
    try:
        return pearson_r(x, y)
    except UndefinedCorrelationError:
        return float("nan")


def marker_report(reference: dict, estimate: dict, meta: dict | None = None) -> ErrorReport:
    """Tracking errors of estimated vs reference marker trajectories.

    ``reference`` and ``estimate`` map marker names to (frames, 3) arrays.
    Errors are per-frame L2 distances in metres; r is per axis and NaN for an
    axis that does not move.
    """
    missing = sorted(set(reference) ^ set(estimate))
    if missing:
        raise DataError(f"marker sets differ: {', '.join(missing)}")
    rep = ErrorReport("markers", meta=dict(meta or {}))
    for name in reference:
        ref, est = _pair(reference[name], estimate[name])
        e = l2_error_series(ref, est)
        mean, sd = mean_sd(e)
        row = {"channel": name, "mean": mean, "sd": sd, "max": max_abs(e), "rms": rms(e)}
        for k, axis in enumerate("xyz"):
            row[f"r_{axis}"] = _r_or_nan(ref[:, k], est[:, k])
        rep.rows.append(row)
    return rep


def torque_case_report(
    names, reference, estimate, tau_obj=None, tau_limb=None, percentiles=(95, 50, 5), meta: dict | None = None
) -> ErrorReport:
    """Per-joint comparison of two torque cases.

    ``reference`` and ``estimate`` are (frames, joints). ``Avg`` is the signed
    mean of ``estimate - reference``. When ``tau_obj`` and ``tau_limb`` are given
    the signed percentile contributions of the object are added.
    """
    names = list(names)
    ref, est = _pair(reference, estimate)
    if ref.ndim != 2 or ref.shape[1] != len(names):
        raise DataError(f"torque arrays must be (frames, {len(names)})")
    rep = ErrorReport("torques", meta=dict(meta or {}))
    with_pct = tau_obj is not None and tau_limb is not None
    if with_pct:
        tau_obj, tau_limb = _pair(tau_obj, tau_limb)
        if tau_obj.shape != ref.shape:
            raise DataError("percentile series do not match the torque arrays")
    for j, name in enumerate(names):
        d = est[:, j] - ref[:, j]
        row = {"channel": name, "avg": float(np.mean(d)), "max": max_abs(d), "rms": rms(d), "r": _r_or_nan(ref[:, j], est[:, j])}
        if with_pct:
            for q in percentiles:
                row[f"p{q}"] = percentile_contribution(tau_obj[:, j], tau_limb[:, j], q)
        rep.rows.append(row)
    return rep


# ---------------------------------------------------------------------------
# Sensitivity study


@dataclass(frozen=True)
class SensitivityConfig:
    """Randomised hand-marker layouts.

    In the default ``"jitter"`` placement each of the k markers moves
    uniformly within a disc of ``disc_diameter`` around its nominal site; the
    nominal sites form a regular k-gon whose adjacent sites are
    ``min_distance`` apart. ``"shared_disc"`` instead draws all k markers in
    one disc of that diameter, which is only feasible for small k.
    Placements violating ``min_distance`` are redrawn.

    ``marker_diameter`` documents how the disc was sized (hand breadth minus one
    marker) and does not enter the sampling.
    """

    sizes: tuple = (3, 4, 5, 6)
    samples: int = 1000
    disc_diameter: float = 0.06
    min_distance: float = 0.03
    marker_diameter: float = 0.012
    seed: int = 0
    placement: str = "jitter"
    metric: str = "pairwise"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(k) for k in self.sizes))
        if not self.sizes or min(self.sizes) < 1:
            raise ConfigError("cluster sizes must be positive integers")
        if self.samples < 2:
            raise ConfigError("samples must be at least 2")
        if not 0 <= self.min_distance < self.disc_diameter:
            raise ConfigError("min_distance must be non-negative and below the disc diameter")
        if self.placement not in ("jitter", "shared_disc"):
            raise ConfigError(f"unknown placement {self.placement!r}")
        if self.metric not in ("pairwise", "nominal"):
            raise ConfigError(f"unknown metric {self.metric!r}")


@dataclass
class SensitivityResult:
    config: SensitivityConfig
    centroids: dict
    mean_distance: dict
    attempts: dict
    layouts: dict

    @property
    def overall_mean(self) -> float:
        return float(np.mean([self.mean_distance[k] for k in self.config.sizes]))


def nominal_layout(k: int, spacing: float) -> np.ndarray:
    """Regular k-gon centred at the origin with adjacent vertices ``spacing`` apart."""
    if k == 1:
        return np.zeros((1, 2))
    rho = spacing / (2 * np.sin(np.pi / k))
    ang = 2 * np.pi * np.arange(k) / k
    return rho * np.column_stack([np.cos(ang), np.sin(ang)])


def uniform_disc(rng, shape, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(shape))
    t = 2 * np.pi * rng.random(shape)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


def _min_pairwise(pts) -> np.ndarray:
    k = pts.shape[-2]
    if k < 2:
        return np.full(pts.shape[:-2], np.inf)
    i, j = np.triu_indices(k, 1)
    return np.linalg.norm(pts[..., i, :] - pts[..., j, :], axis=-1).min(axis=-1)


def sample_placement(rng, k: int, cfg: SensitivityConfig, batch: int = 64):
    """One accepted layout (k, 2) and the number of draws it took."""
    radius = cfg.disc_diameter / 2
    base = nominal_layout(k, cfg.min_distance) if cfg.placement == "jitter" else np.zeros((k, 2))
    tried = 0
    while tried < MAX_REJECTION_ATTEMPTS:
        n = min(batch, MAX_REJECTION_ATTEMPTS - tried)
        cand = base + uniform_disc(rng, (n, k), radius)
        ok = np.flatnonzero(_min_pairwise(cand) >= cfg.min_distance)
        if ok.size:
            return cand[ok[0]], tried + int(ok[0]) + 1
        tried += n
    raise ConfigError(
        f"cannot place {k} markers {cfg.min_distance * 1e3:g} mm apart in a "
        f"{cfg.disc_diameter * 1e3:g} mm disc after {MAX_REJECTION_ATTEMPTS} attempts"
    )


def _thread_count() -> int:
    raw = os.environ.get("OAA_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"OAA_THREADS must be an integer, got {raw!r}") from None


def _size_run(k, seeds, cfg, threads):
    def one(ss):
        return sample_placement(np.random.default_rng(ss), k, cfg)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(ss) for ss in seeds]
    layouts = np.stack([r[0] for r in results])
    tries = np.array([r[1] for r in results])
    return layouts, tries


def sensitivity_study(cfg: SensitivityConfig | None = None, threads: int | None = None) -> SensitivityResult:
    """Spread of hand-marker cluster centroids under randomised placement.

    Every placement draws from its own child seed, so results do not depend
    on the thread count.
    """
    cfg = cfg or SensitivityConfig()
    threads = _thread_count() if threads is None else threads
    root = np.random.SeedSequence(cfg.seed)
    size_seeds = root.spawn(len(cfg.sizes))
    centroids, means, attempts, kept = {}, {}, {}, {}
    for k, ss in zip(cfg.sizes, size_seeds):
        layouts, tries = _size_run(k, ss.spawn(cfg.samples), cfg, threads)
        c = layouts.mean(axis=1)
        kept[k] = layouts
        centroids[k] = c
        if cfg.metric == "pairwise":
            means[k] = float(np.mean(pdist(c)))
        else:
            means[k] = float(np.mean(np.linalg.norm(c, axis=1)))
        attempts[k] = float(tries.mean())
    return SensitivityResult(cfg, centroids, means, attempts, kept)


def offset_from_sensitivity(result: SensitivityResult) -> float:
    """Marker offset distance (m): the mean centroid distance across cluster sizes."""
    return result.overall_mean
