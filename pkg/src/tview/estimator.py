"""Per-keypoint fitting of 3D t-distributions to multi-view 2D labels.

Each keypoint carries nine free parameters: the mean (3, world units) and a
lower-triangular factor ``L`` of the scale matrix, stored as three raw
diagonal entries mapped through ``elu(x) + 1`` and three unconstrained
off-diagonal entries ``(L21, L31, L32)``. The objective is the mean, over
valid (camera, keypoint) pairs, of the negative log density of each 2D label
under the keypoint distribution pushed onto that camera's image plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .camera import EPS_DEPTH, PROJECTION_MODES, Camera
from .errors import (
    DegenerateAnchor,
    DegenerateGeometry,
    DehomogenizationFailure,
    InsufficientViews,
    NoValidObservations,
    NotPositiveDefinite,
)
from .tdist import MvtDist3, nll, project_to_camera
from .triangulation import TriangulationResult, triangulate_dlt

_TRIL = ((1, 0), (2, 0), (2, 1))


def shifted_elu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def shifted_elu_grad(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0.0)))


def inverse_shifted_elu(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("shifted ELU only takes positive values")
    return np.where(y >= 1.0, y - 1.0, np.log(np.minimum(y, 1.0)))


@dataclass(frozen=True)
class ScaleChol:
    """Unconstrained parameterisation of a 3x3 SPD scale matrix."""

    raw_diag: np.ndarray
    off_diag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "raw_diag", np.array(self.raw_diag, dtype=float).reshape(3))
        object.__setattr__(self, "off_diag", np.array(self.off_diag, dtype=float).reshape(3))

    def lower(self, floor: float = 0.0) -> np.ndarray:
        L = np.zeros((3, 3))
        L[np.diag_indices(3)] = np.maximum(shifted_elu(self.raw_diag), floor)
        for (i, j), v in zip(_TRIL, self.off_diag):
            L[i, j] = v
        return L

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.raw_diag, self.off_diag])

    @classmethod
    def from_vector(cls, v) -> "ScaleChol":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    @classmethod
    def from_lower(cls, L) -> "ScaleChol":
        L = np.asarray(L, dtype=float)
        return cls(inverse_shifted_elu(np.diag(L)), [L[i, j] for i, j in _TRIL])

    @classmethod
    def from_sigma(cls, sigma) -> "ScaleChol":
        try:
            L = np.linalg.cholesky(np.asarray(sigma, dtype=float))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("cannot parameterise a non-SPD matrix") from exc
        return cls.from_lower(L)


def materialize_sigma(p: ScaleChol) -> np.ndarray:
    """``L L^T`` for the factor described by ``p``."""
    L = p.lower()
    return L @ L.T


@dataclass(frozen=True)
class FitConfig:
    """Optimiser settings.

    ``init_scale`` (diagonal of the initial ``L``) defaults to 1% of the scene
    diameter, the largest pairwise distance among the camera centres and the
    triangulated point. The diagonal of ``L`` never drops below
    ``floor_fraction`` times that diameter.
    """

    nu: float = 5.0
    max_iters: int = 500
    step_size: float = 1e-2
    rel_tol: float = 1e-8
    init_scale: float | None = None
    projection: str = "anchored"
    floor_fraction: float = 1e-6

    def __post_init__(self):
        if not self.nu > 0 or self.max_iters <= 0 or not self.step_size > 0 or not self.rel_tol > 0:
            raise ValueError("nu, max_iters, step_size and rel_tol must be positive")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if self.projection not in PROJECTION_MODES:
            raise ValueError(f"projection must be one of {PROJECTION_MODES}")


@dataclass(frozen=True)
class KeypointEstimate:
    """Fitted keypoint distribution plus optimiser diagnostics.

    ``dist`` is None when no estimate could be produced; ``error`` then holds
    the reason.
    """

    dist: MvtDist3 | None
    final_loss: float
    iterations: int
    triangulation: TriangulationResult | None
    converged: bool
    chol: ScaleChol | None = None
    error: str | None = None
    history: tuple | None = field(default=None, compare=False, repr=False)

    @property
    def mu(self) -> np.ndarray:
        return self.dist.mu if self.dist is not None else np.full(3, np.nan)

    @property
    def degenerate(self) -> bool:
        """No estimate, an ill-conditioned initial triangulation, or an anchor
        the objective cannot use (non-finite loss, e.g. behind a camera)."""
        return (
            self.dist is None
            or self.triangulation is None
            or self.triangulation.degenerate
            or not math.isfinite(self.final_loss)
        )


# ---------------------------------------------------------------------------
# reference (unbatched) objective


def view_loss(mu, sigma, label, cam: Camera, nu: float, mode: str = "anchored") -> float:
    """Negative log density of a 2D label under the projected distribution."""
    proj = project_to_camera(MvtDist3(mu, sigma, nu), cam, mode=mode)
    return float(nll(proj, np.asarray(label, dtype=float)))


def total_loss(mus, sigmas, labels, cams: Sequence[Camera], nu: float, mask=None, mode: str = "anchored") -> float:
    """Mean of :func:`view_loss` over valid (camera, keypoint) pairs.

    ``labels`` has shape ``(C, K, 2)``; ``mask`` (``(C, K)`` bool, default all
    True) marks usable labels.
    """
    labels = np.asarray(labels, dtype=float)
    C, K = labels.shape[:2]
    mask = np.ones((C, K), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    total, count = 0.0, 0
    for c in range(C):
        for k in range(K):
            if mask[c, k]:
                total += view_loss(mus[k], sigmas[k], labels[c, k], cams[c], nu, mode)
                count += 1
    if count == 0:
        raise NoValidObservations("no valid (camera, keypoint) pairs")
    return total / count


# ---------------------------------------------------------------------------
# batched objective with analytic gradient


def _lower_batch(raw, off, floor):
    diag = shifted_elu(raw)
    ddiag = shifted_elu_grad(raw)
    floor = np.broadcast_to(np.asarray(floor, dtype=float), raw.shape[:1])[:, None]
    if np.any(floor > 0):
        clamped = diag < floor
        diag = np.where(clamped, floor, diag)
        ddiag = np.where(clamped, 0.0, ddiag)
    B = raw.shape[0]
    L = np.zeros((B, 3, 3))
    L[:, 0, 0], L[:, 1, 1], L[:, 2, 2] = diag[:, 0], diag[:, 1], diag[:, 2]
    L[:, 1, 0], L[:, 2, 0], L[:, 2, 1] = off[:, 0], off[:, 1], off[:, 2]
    return L, ddiag


def loss_terms(theta, cams: Sequence[Camera], labels, mask, nu: float, mode: str = "anchored", floor: float = 0.0):
    """Per-keypoint summed view losses, valid-view counts and gradients.

    Parameters
    ----------
    theta : ndarray, shape (B, 9)
        ``[mu (3), raw_diag (3), off_diag (3)]`` per keypoint.
    labels : ndarray, shape (C, B, 2)
    mask : ndarray of bool, shape (C, B)

    Returns
    -------
    sums : ndarray (B,)
        Sum of view losses; ``inf`` where an anchor is degenerate.
    counts : ndarray (B,)
    grads : ndarray (B, 9)
        Gradient of ``sums`` with respect to ``theta``.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _loss_terms(np.asarray(theta, dtype=float), cams, labels, mask, nu, mode, floor)


def _camera_arrays(cams):
    R = np.array([cam.rotation for cam in cams])
    t = np.array([cam.translation for cam in cams])
    f = np.array([[cam.fx, cam.fy] for cam in cams])
    pp = np.array([[cam.cx, cam.cy] for cam in cams])
    return R, t, f, pp


def _loss_terms(theta, cams, labels, mask, nu, mode, floor):
    mu, raw, off = theta[:, :3], theta[:, 3:6], theta[:, 6:9]
    B = theta.shape[0]
    L, ddiag = _lower_batch(raw, off, floor)
    sigma = L @ np.swapaxes(L, -1, -2)
    R, t, f, pp = _camera_arrays(cams)
    mask = np.asarray(mask, dtype=bool)
    mf = mask.astype(float)

    # camera-frame anchors, (C, B, 3)
    mc = mu @ np.swapaxes(R, -1, -2) + t[:, None, :]
    x, y, z = mc[..., 0], mc[..., 1], mc[..., 2]
    C = len(cams)
    if mode in ("norm", "anchored"):
        n = np.sqrt(np.sum(mc * mc, axis=-1))
        ok = n > EPS_DEPTH
        if mode == "anchored":
            ok &= z > EPS_DEPTH
            z = np.where(ok, z, 1.0)
        n = np.where(ok, n, 1.0)
        A = (f[:, :, None] * R[:, :2, :])[:, None] / n[..., None, None]
        denom = n if mode == "norm" else z
        proj = f[:, None, :] * mc[..., :2] / denom[..., None] + pp[:, None, :]
    else:
        ok = z > EPS_DEPTH
        z = np.where(ok, z, 1.0)
        Bm = np.zeros((C, B, 2, 3))
        Bm[..., 0, 0] = Bm[..., 1, 1] = 1.0 / z
        Bm[..., 0, 2] = -x / z**2
        Bm[..., 1, 2] = -y / z**2
        A = (f[:, None, :, None] * Bm) @ R[:, None]
        proj = f[:, None, :] * mc[..., :2] / z[..., None] + pp[:, None, :]
    bad = np.any(mask & ~ok, axis=0)

    At = np.swapaxes(A, -1, -2)
    S = A @ sigma @ At
    det = S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    ok_det = det > 0
    bad |= np.any(mask & ~ok_det, axis=0)
    det = np.where(ok_det, det, 1.0)
    Sinv = np.empty_like(S)
    Sinv[..., 0, 0] = S[..., 1, 1] / det
    Sinv[..., 1, 1] = S[..., 0, 0] / det
    Sinv[..., 0, 1] = -0.5 * (S[..., 0, 1] + S[..., 1, 0]) / det
    Sinv[..., 1, 0] = Sinv[..., 0, 1]
    r = np.where(mask[..., None], np.asarray(labels, dtype=float) - proj, 0.0)
    q = (Sinv @ r[..., None])[..., 0]
    m2 = np.sum(r * q, axis=-1)
    if math.isinf(nu):
        ell = 0.5 * np.log(det) + 0.5 * m2
        w = np.ones_like(m2)
    else:
        ell = 0.5 * np.log(det) + 0.5 * (nu + 2.0) * np.log1p(m2 / nu)
        w = (nu + 2.0) / (nu + m2)
    sums = np.sum(np.where(mask, ell, 0.0), axis=0)
    counts = np.sum(mask, axis=0)

    g_proj = -(w * mf)[..., None] * q
    G = 0.5 * mf[..., None, None] * (Sinv - w[..., None, None] * q[..., :, None] * q[..., None, :])
    g_sigma = np.sum(At @ G @ A, axis=0)
    gA = 2.0 * (G @ A @ sigma)
    if mode == "norm":
        v = np.zeros((C, B, 3))
        v[..., :2] = f[:, None, :] * g_proj
        gmc = v / n[..., None] - mc * (np.sum(mc * v, axis=-1) / n**3)[..., None]
        gmc -= mc * (np.sum(gA * A, axis=(-2, -1)) / n**2)[..., None]
    elif mode == "anchored":
        fg = f[:, None, :] * g_proj
        gmc = np.zeros((C, B, 3))
        gmc[..., 0] = fg[..., 0] / z
        gmc[..., 1] = fg[..., 1] / z
        gmc[..., 2] = -(fg[..., 0] * x + fg[..., 1] * y) / z**2
        gmc -= mc * (np.sum(gA * A, axis=(-2, -1)) / n**2)[..., None]
    else:
        gmc = ((f[:, None, :] * g_proj)[..., None, :] @ Bm)[..., 0, :]
        gB = f[:, None, :, None] * (gA @ np.swapaxes(R, -1, -2)[:, None])
        iz2 = 1.0 / z**2
        gmc[..., 0] += -gB[..., 0, 2] * iz2
        gmc[..., 1] += -gB[..., 1, 2] * iz2
        gmc[..., 2] += (
            -(gB[..., 0, 0] + gB[..., 1, 1]) * iz2
            + 2.0 * (gB[..., 0, 2] * x + gB[..., 1, 2] * y) / z**3
        )
    g_mu = np.sum(gmc @ R, axis=0)

    g_L = 2.0 * (g_sigma @ L)
    grads = np.empty((B, 9))
    grads[:, :3] = g_mu
    grads[:, 3] = g_L[:, 0, 0] * ddiag[:, 0]
    grads[:, 4] = g_L[:, 1, 1] * ddiag[:, 1]
    grads[:, 5] = g_L[:, 2, 2] * ddiag[:, 2]
    grads[:, 6] = g_L[:, 1, 0]
    grads[:, 7] = g_L[:, 2, 0]
    grads[:, 8] = g_L[:, 2, 1]
    sums = np.where(bad, np.inf, sums)
    return sums, counts, grads


def gradient(mus, chols, labels, cams: Sequence[Camera], nu: float, mask=None, mode: str = "anchored"):
    """Objective value and its analytic gradient.

    Parameters
    ----------
    mus : ndarray, shape (K, 3)
    chols : ndarray, shape (K, 6) or sequence of ScaleChol
        Raw parameters ``[raw_diag, off_diag]`` per keypoint.
    labels : ndarray, shape (C, K, 2)

    Returns
    -------
    loss : float
        Same value as :func:`total_loss`.
    grad : ndarray, shape (K, 9)
        Derivatives with respect to ``[mu, raw_diag, off_diag]``.
    """
    mus = np.asarray(mus, dtype=float).reshape(-1, 3)
    raw = np.array([c.as_vector() if isinstance(c, ScaleChol) else np.asarray(c, dtype=float) for c in chols])
    labels = np.asarray(labels, dtype=float)
    C, K = labels.shape[:2]
    mask = np.ones((C, K), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    theta = np.hstack([mus, raw.reshape(-1, 6)])
    sums, counts, grads = loss_terms(theta, cams, labels, mask, nu, mode)
    n = counts.sum()
    if n == 0:
        raise NoValidObservations("no valid (camera, keypoint) pairs")
    if not np.all(np.isfinite(sums)):
        raise DegenerateAnchor("a keypoint anchor is degenerate in some camera")
    return float(sums.sum() / n), grads / n


# ---------------------------------------------------------------------------
# optimisation


def scene_diameter(cams: Sequence[Camera], point=None) -> float:
    pts = [cam.center for cam in cams]
    if point is not None:
        pts.append(np.asarray(point, dtype=float))
    pts = np.array(pts)
    diffs = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt(np.max(np.sum(diffs**2, axis=-1))))


_RMS_DECAY = 0.9
_RMS_EPS = 1e-8
_GROW = 1.2
_SHRINK = 0.5


def _step_scale(theta, floors):
    """Natural step units: per-coordinate scales plus the current ``L``.

    The mean is stepped in whitened coordinates, ``mu = mu0 + L z``, so its
    steps follow the shape of the current distribution. Off-diagonal entries
    of row ``i`` of ``L`` carry length units and are stepped in multiples of
    the marginal spread ``sqrt(sigma_ii)``; the raw diagonal is already
    logarithmic below 1.
    """
    L, _ = _lower_batch(theta[:, 3:6], theta[:, 6:9], floors)
    spread = np.sqrt(np.sum(L * L, axis=2))
    scale = np.ones((theta.shape[0], 9))
    scale[:, 6] = spread[:, 1]
    scale[:, 7] = spread[:, 2]
    scale[:, 8] = spread[:, 2]
    return scale, L


def _to_natural(g, scale, L):
    out = g * scale
    out[:, :3] = np.einsum("bji,bj->bi", L, g[:, :3])
    return out


def _from_natural(z, scale, L):
    out = z * scale
    out[:, :3] = np.einsum("bij,bj->bi", L, z[:, :3])
    return out


def _descend(theta0, cams, labels, mask, cfg: FitConfig, floor, record=False):
    """Backtracking RMS-scaled descent, independent per row of ``theta0``.

    Coordinates are stepped in their natural units (see ``_step_scale``).
    A step that increases the loss is rejected and the step size halved; an
    accepted step grows it by ``_GROW``. ``floor`` (B,) is the per-row lower
    bound on diag(L). Returns final theta, per-row mean loss, iterations,
    convergence flags and (optionally) the loss history.
    """
    theta = theta0.copy()
    B = theta.shape[0]
    floors = np.broadcast_to(np.asarray(floor, dtype=float), (B,))

    def evaluate(th, fl, sub_labels, sub_mask):
        s, n, g = loss_terms(th, cams, sub_labels, sub_mask, cfg.nu, cfg.projection, fl)
        n = np.maximum(n, 1)
        return s / n, g / n[:, None]

    loss, g = evaluate(theta, floors, labels, mask)
    scale, lowers = _step_scale(theta, floors)
    v = _to_natural(g, scale, lowers) ** 2
    lr = np.full(B, cfg.step_size)
    min_lr = cfg.step_size * 1e-10
    active = np.isfinite(loss)
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    history = [loss.copy()] if record else None
    for _ in range(cfg.max_iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        gs = _to_natural(g[idx], scale[idx], lowers[idx])
        v[idx] = _RMS_DECAY * v[idx] + (1 - _RMS_DECAY) * gs**2
        step = _from_natural(lr[idx, None] * gs / (np.sqrt(v[idx]) + _RMS_EPS), scale[idx], lowers[idx])
        trial = theta[idx] - step
        new_loss, new_g = evaluate(trial, floors[idx], labels[:, idx], mask[:, idx])
        iters[idx] += 1
        accept = np.isfinite(new_loss) & (new_loss <= loss[idx])
        acc, rej = idx[accept], idx[~accept]
        delta = loss[acc] - new_loss[accept]
        theta[acc] = trial[accept]
        loss[acc] = new_loss[accept]
        g[acc] = new_g[accept]
        scale[acc], lowers[acc] = _step_scale(theta[acc], floors[acc])
        lr[acc] *= _GROW
        lr[rej] *= _SHRINK
        done = np.zeros(B, dtype=bool)
        done[acc] = delta <= cfg.rel_tol * (1.0 + np.abs(loss[acc]))
        done[rej] = lr[rej] < min_lr
        converged |= done
        active &= ~done
        if record:
            history.append(loss.copy())
    return theta, loss, iters, converged, history


def _prepare_init(observations, cfg: FitConfig):
    cams = [cam for cam, _ in observations]
    if len(observations) < 2:
        raise InsufficientViews(f"need at least 2 views, got {len(observations)}")
    try:
        tri = triangulate_dlt(observations)
    except DehomogenizationFailure as exc:
        raise DegenerateGeometry(f"no finite triangulation from {len(observations)} views") from exc
    # a flagged (ill-conditioned) triangulation still seeds the fit
    diameter = scene_diameter(cams, tri.point)
    init = cfg.init_scale if cfg.init_scale is not None else 0.01 * diameter
    floor = cfg.floor_fraction * diameter
    return tri, init, floor


def _initial_theta(point, init_scale):
    theta = np.zeros(9)
    theta[:3] = point
    theta[3:6] = inverse_shifted_elu(np.full(3, init_scale))
    return theta


def _finish(theta, loss, iters, converged, tri, cfg, floor, history=None) -> KeypointEstimate:
    raw = ScaleChol(theta[3:6], theta[6:9])
    # fold the floor into the raw parameters so materialize_sigma reproduces
    # the optimised matrix exactly
    chol = ScaleChol.from_lower(raw.lower(floor))
    chol = ScaleChol(chol.raw_diag, raw.off_diag)
    sigma = materialize_sigma(chol)
    try:
        dist = MvtDist3(theta[:3], 0.5 * (sigma + sigma.T), cfg.nu)
    except NotPositiveDefinite:
        return KeypointEstimate(None, float(loss), int(iters), tri, False, chol, "scale matrix lost definiteness")
    return KeypointEstimate(dist, float(loss), int(iters), tri, bool(converged), chol, None, history)


def fit_keypoint(observations: Sequence[tuple[Camera, np.ndarray]], cfg: FitConfig = FitConfig(), record: bool = False) -> KeypointEstimate:
    """Fit one keypoint's distribution to its 2D labels.

    The mean starts at the DLT triangulation and the scale factor at
    ``cfg.init_scale`` on the diagonal; both are then refined by minimising
    the mean projected negative log-likelihood.

    Raises
    ------
    InsufficientViews
        Fewer than two observations.
    DegenerateGeometry
        The triangulation has no finite solution.
    """
    tri, init, floor = _prepare_init(observations, cfg)
    cams = [cam for cam, _ in observations]
    labels = np.array([np.asarray(px, dtype=float) for _, px in observations])[:, None, :]
    mask = np.ones((len(cams), 1), dtype=bool)
    theta0 = _initial_theta(tri.point, init)[None]
    theta, loss, iters, conv, hist = _descend(theta0, cams, labels, mask, cfg, floor, record)
    history = tuple(float(h[0]) for h in hist) if record else None
    return _finish(theta[0], loss[0], iters[0], conv[0], tri, cfg, floor, history)


def projected_gradient(est: KeypointEstimate, observations: Sequence[tuple[Camera, np.ndarray]],
                       cfg: FitConfig = FitConfig()) -> np.ndarray:
    """Stationarity measure of a fitted keypoint.

    Gradient of the floored objective in the optimiser's natural units (see
    ``_step_scale``), with raw-diagonal components zeroed where ``diag(L)``
    sits on the floor and the gradient points below it. It vanishes at a
    constrained minimum. Raw-coordinate gradients do not: near the floor they
    scale like ``1 / floor**2``.
    """
    if est.dist is None or est.chol is None or est.triangulation is None:
        raise ValueError("estimate has no fitted distribution")
    cams = [cam for cam, _ in observations]
    labels = np.array([np.asarray(px, dtype=float) for _, px in observations])[:, None, :]
    floor = np.array([cfg.floor_fraction * scene_diameter(cams, est.triangulation.point)])
    theta = np.concatenate([est.mu, est.chol.as_vector()])[None]
    s, n, g = loss_terms(theta, cams, labels, np.ones((len(cams), 1), dtype=bool), cfg.nu, cfg.projection, floor)
    scale, L = _step_scale(theta, floor)
    out = _to_natural(g / n[:, None], scale, L)[0]
    at_floor = np.diag(L[0]) <= floor[0] * (1.0 + 1e-9)
    out[3:6] = np.where(at_floor & (out[3:6] > 0), 0.0, out[3:6])
    return out


def _failed(exc: Exception) -> KeypointEstimate:
    return KeypointEstimate(None, float("nan"), 0, None, False, None, f"{type(exc).__name__}: {exc}")


def fit_frame(cams: Sequence[Camera], labels, mask=None, cfg: FitConfig = FitConfig()) -> list[KeypointEstimate]:
    """Fit every keypoint of one frame.

    Keypoints are optimised together as a batch, but each row of the batch
    is an independent problem with its own step size and stopping rule.
    Keypoints that cannot be initialised come back as failed estimates
    (``dist is None``) instead of raising.
    """
    labels = np.asarray(labels, dtype=float)
    C, K = labels.shape[:2]
    mask = np.ones((C, K), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    mask = mask & np.all(np.isfinite(labels), axis=-1)
    out: list[KeypointEstimate | None] = [None] * K
    rows, tris, scales, floors = [], [], [], []
    for k in range(K):
        obs = [(cams[c], labels[c, k]) for c in range(C) if mask[c, k]]
        try:
            tri, init, floor = _prepare_init(obs, cfg)
        except (InsufficientViews, DegenerateGeometry) as exc:
            out[k] = _failed(exc)
            continue
        rows.append(k)
        tris.append(tri)
        scales.append(init)
        floors.append(floor)
    if rows:
        idx = np.array(rows)
        theta0 = np.array([_initial_theta(t.point, s) for t, s in zip(tris, scales)])
        theta, loss, iters, conv, _ = _descend(theta0, cams, labels[:, idx], mask[:, idx], cfg, np.array(floors))
        for j, k in enumerate(rows):
            out[k] = _finish(theta[j], loss[j], iters[j], conv[j], tris[j], cfg, floors[j])
    return out
