"""Hand coordinate frames from dorsal hand markers and the two wrist markers.

The frame sits at the hand-marker centroid with basis ``n`` (palm normal),
``p`` (thumbs-up direction) and ``f = n x p`` (index finger direction).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateGeometryError
from .geometry import rotation_about
from .mocap_io import MarkerSeries, TrialConfig

COLLINEAR_RTOL = 1e-9
MIN_PROJECTION = 1e-9


@dataclass(frozen=True)
class HandFrame:
    origin: np.ndarray
    n: np.ndarray
    p: np.ndarray
    f: np.ndarray

    @property
    def basis(self) -> np.ndarray:
        """3x3 matrix with columns n, p, f."""
        return np.column_stack([self.n, self.p, self.f])


def fit_palm_normal(hand_points, wrist_points, reference_index: int = 0) -> np.ndarray:
    """Unit palm normal of the hand-marker cloud.

    The normal is the right singular vector of the centred hand points with
    the smallest singular value. Its sign is chosen so that
    ``n . (w x (wrist - hand[k])) <= 0`` with ``w`` the ulnar-to-radial wrist
    vector.
    """
    hand = np.asarray(hand_points, dtype=float)
    wrist = np.asarray(wrist_points, dtype=float)
    if hand.ndim != 2 or hand.shape[0] < 3 or hand.shape[1] != 3:
        raise DataError(f"need at least 3 hand points, got array of shape {hand.shape}")
    if wrist.shape != (2, 3):
        raise DataError(f"need exactly 2 wrist points, got array of shape {wrist.shape}")
    centred = hand - hand.mean(axis=0)
    _, s, vt = np.linalg.svd(centred)
    if s[0] == 0.0 or s[1] < COLLINEAR_RTOL * s[0]:
        raise DegenerateGeometryError("hand markers are collinear or coincident; palm normal undefined")
    n = vt[-1]
    w = wrist[1] - wrist[0]
    if n @ np.cross(w, wrist[0] - hand[reference_index]) > 0:
        n = -n
    return n


def compute_thumb_vector(n, wrist_vector, alpha: float) -> np.ndarray:
    """Project the wrist vector into the palm plane and turn it by ``alpha`` about ``n``."""
    n = np.asarray(n, dtype=float)
    w = np.asarray(wrist_vector, dtype=float)
    proj = w - (w @ n) * n
    norm = np.linalg.norm(proj)
    if norm <= MIN_PROJECTION:
        raise DegenerateGeometryError("wrist vector is parallel to the palm normal")
    p = rotation_about(n, alpha) @ (proj / norm)
    return p / np.linalg.norm(p)


def compute_hand_frame(hand_points, wrist_points, alpha: float, reference_index: int = 0) -> HandFrame:
    hand = np.asarray(hand_points, dtype=float)
    wrist = np.asarray(wrist_points, dtype=float)
    n = fit_palm_normal(hand, wrist, reference_index)
    p = compute_thumb_vector(n, wrist[1] - wrist[0], alpha)
    return HandFrame(origin=hand.mean(axis=0), n=n, p=p, f=np.cross(n, p))


def _frames_from_arrays(hand, wrist, alpha, reference_index=0):
    """Vectorised per-frame construction. Returns (origin, n, p, f) arrays."""
    origin = hand.mean(axis=1)
    centred = hand - origin[:, None, :]
    _, s, vt = np.linalg.svd(centred)
    bad = (s[:, 0] == 0.0) | (s[:, 1] < COLLINEAR_RTOL * s[:, 0])
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateGeometryError(f"frame {i}: hand markers are collinear or coincident")
    n = vt[:, -1, :]
    w = wrist[:, 1] - wrist[:, 0]
    test = np.einsum("ij,ij->i", n, np.cross(w, wrist[:, 0] - hand[:, reference_index]))
    n = np.where((test > 0)[:, None], -n, n)
    p, f = _thumb_and_finger(n, w, alpha)
    return origin, n, p, f


def _thumb_and_finger(n, w, alpha):
    proj = w - np.einsum("ij,ij->i", w, n)[:, None] * n
    norm = np.linalg.norm(proj, axis=1)
    bad = norm <= MIN_PROJECTION
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateGeometryError(f"frame {i}: wrist vector is parallel to the palm normal")
    R = rotation_about(n, alpha)
    p = np.einsum("nij,nj->ni", R, proj / norm[:, None])
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    return p, np.cross(n, p)


@dataclass(frozen=True)
class HandFrameSeries:
    times: np.ndarray
    origin: np.ndarray
    n: np.ndarray
    p: np.ndarray
    f: np.ndarray

    def __len__(self):
        return self.times.size

    def __getitem__(self, i) -> HandFrame:
        return HandFrame(self.origin[i], self.n[i], self.p[i], self.f[i])

    @property
    def basis(self) -> np.ndarray:
        """(frames, 3, 3) with columns n, p, f."""
        return np.stack([self.n, self.p, self.f], axis=-1)


def compute_hand_frame_series(
    markers: MarkerSeries,
    config: TrialConfig | None = None,
    alpha=None,
    *,
    hand_labels=None,
    wrist_labels=None,
    reference_index: int = 0,
) -> HandFrameSeries:
    """One hand frame per marker frame.

    Labels come from ``config`` unless given explicitly; ``alpha`` (one wrist
    deviation angle per frame, radians) is required. After the per-frame pass
    a continuity guard flips ``n`` (and rebuilds ``p``, ``f``) wherever it
    reverses relative to the previous frame.
    """
    if hand_labels is None:
        hand_labels = config.hand_marker_labels
    if wrist_labels is None:
        wrist_labels = config.wrist_marker_labels
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (markers.n_frames,):
        raise DataError(f"deviation angle series has {alpha.size} samples for {markers.n_frames} frames")
    hand = markers.select(list(hand_labels))
    wrist = markers.select(list(wrist_labels))
    origin, n, p, f = _frames_from_arrays(hand, wrist, alpha, reference_index)

    flips = np.einsum("ij,ij->i", n[1:], n[:-1]) < 0
    if flips.any():
        n = n.copy()
        for i in range(int(np.flatnonzero(flips)[0]) + 1, len(n)):
            if n[i] @ n[i - 1] < 0:
                n[i] = -n[i]
        w = wrist[:, 1] - wrist[:, 0]
        p, f = _thumb_and_finger(n, w, alpha)
    return HandFrameSeries(markers.times.copy(), origin, n, p, f)
