"""Finite-difference verification of the analytic objective gradient.

The analytic route (:func:`tview.estimator.gradient`) is compared with central
differences of the unbatched reference objective
(:func:`tview.estimator.total_loss`), which shares no code with it beyond the
camera and distribution primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import project_perspective
from .estimator import ScaleChol, gradient, materialize_sigma, total_loss
from .simulator import RigSpec, build_rig


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    per_config: np.ndarray
    n_configs: int

    def passed(self, tol: float) -> bool:
        return bool(self.max_rel_error < tol)


def random_config(rng: np.random.Generator, cams, pixel_sigma: float = 5.0):
    """Random keypoints, scale parameters and noisy labels for ``cams``."""
    K = int(rng.integers(1, 4))
    mus = rng.uniform(-0.8, 0.8, (K, 3)) + [0.0, 0.0, 1.0]
    raw = np.hstack([rng.uniform(-3.0, 2.0, (K, 3)), rng.normal(0.0, 0.3, (K, 3))])
    labels = np.array([[project_perspective(c, m) for m in mus] for c in cams])
    labels += rng.normal(0.0, pixel_sigma, labels.shape)
    return mus, raw, labels


def central_difference(f, x, h: float = 1e-5):
    """Central differences with step ``h * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def relative_error(a, b) -> np.ndarray:
    """Componentwise ``|a - b| / max(|a|, |b|)``; zero where both vanish."""
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.abs(a), np.abs(b))
    return np.where(denom > 0, np.abs(a - b) / np.where(denom > 0, denom, 1.0), 0.0)


def check_gradient(n_configs: int = 100, seed: int = 0, h: float = 1e-5, nu: float = 5.0,
                   mode: str = "anchored", rig: RigSpec = RigSpec()) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    cams = build_rig(rig)
    worst = np.zeros(n_configs)
    for n in range(n_configs):
        mus, raw, labels = random_config(rng, cams)
        K = len(mus)

        def f(v):
            th = v.reshape(K, 9)
            sig = [materialize_sigma(ScaleChol.from_vector(r)) for r in th[:, 3:]]
            return total_loss(th[:, :3], sig, labels, cams, nu, mode=mode)

        _, g = gradient(mus, raw, labels, cams, nu, mode=mode)
        num = central_difference(f, np.hstack([mus, raw]).reshape(-1), h)
        worst[n] = relative_error(g.reshape(-1), num).max()
    return GradCheckResult(float(worst.max()), worst, n_configs)
