"""Soft-argmax over heatmaps and linear (DLT) multi-view triangulation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .camera import Camera
from .errors import DehomogenizationFailure, InsufficientViews

MAX_VIEWS = 16
# condition ratios below this flag a triangulation as degenerate
DEGENERATE_RATIO = 10.0


@dataclass(frozen=True)
class Heatmap:
    """Logit grid indexed ``values[i, j]`` with ``i`` along image x (width)
    and ``j`` along image y (height)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"heatmap must be a non-empty 2D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]


def soft_argmax(hm: Heatmap, temperature: float = 1.0) -> np.ndarray:
    """Expected pixel position under ``softmax(values / temperature)``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = hm.values / temperature
    p = np.exp(logits - logits.max())
    p /= p.sum()
    i = np.arange(hm.width, dtype=float)
    j = np.arange(hm.height, dtype=float)
    out = np.array([p.sum(axis=1) @ i, p.sum(axis=0) @ j])
    # rounding can push a one-hot mean a few ulps past the border
    return np.clip(out, 0.0, [hm.width - 1, hm.height - 1])


@dataclass(frozen=True)
class TriangulationResult:
    point: np.ndarray
    smallest_singular_value: float
    condition_ratio: float

    @property
    def degenerate(self) -> bool:
        return bool(self.condition_ratio < DEGENERATE_RATIO)


def design_matrix(observations: Sequence[tuple[Camera, np.ndarray]], weights=None) -> np.ndarray:
    """Stacked DLT rows in intrinsics-normalised image coordinates.

    Each view contributes ``u p3 - p1`` and ``v p3 - p2`` where ``p1..p3`` are
    rows of ``[R | t]`` and ``(u, v)`` is the pixel mapped through ``K^-1``.
    """
    rows = []
    if weights is None:
        weights = np.ones(len(observations))
    for (cam, px), w in zip(observations, weights):
        px = np.asarray(px, dtype=float)
        u = (px[0] - cam.cx) / cam.fx
        v = (px[1] - cam.cy) / cam.fy
        P = np.hstack([cam.rotation, cam.translation[:, None]])
        rows.append(w * (u * P[2] - P[0]))
        rows.append(w * (v * P[2] - P[1]))
    return np.array(rows)


def triangulate_dlt(observations: Sequence[tuple[Camera, np.ndarray]], weights=None) -> TriangulationResult:
    """Total-least-squares triangulation: ``min ||A y||`` over unit ``y``.

    Parameters
    ----------
    observations : sequence of (Camera, pixel 2-vector)
    weights : sequence of float, optional
        Per-view row scaling of the design matrix (default all ones).

    Returns
    -------
    TriangulationResult
        ``condition_ratio`` is the second-smallest over the smallest singular
        value, with singular values floored at ``1e-12`` times the largest so
        a rank-deficient system (coincident rays) reports a ratio near 1.

    Raises
    ------
    InsufficientViews
        Fewer than two observations.
    DehomogenizationFailure
        The solution has ``|y4| < 1e-12`` (point at infinity).
    """
    n = len(observations)
    if n < 2:
        raise InsufficientViews(f"need at least 2 views, got {n}")
    if n > MAX_VIEWS:
        raise ValueError(f"at most {MAX_VIEWS} views supported, got {n}")
    for _, px in observations:
        if not np.all(np.isfinite(px)):
            raise ValueError("non-finite observation")
    A = design_matrix(observations, weights)
    _, s, vt = np.linalg.svd(A)
    y = vt[-1]
    floor = 1e-12 * s[0]
    s_min = max(s[-1], floor)
    ratio = max(s[-2], s_min) / s_min
    if abs(y[3]) < 1e-12:
        raise DehomogenizationFailure("triangulated point lies at infinity")
    return TriangulationResult(point=y[:3] / y[3], smallest_singular_value=float(s[-1]), condition_ratio=float(ratio))
