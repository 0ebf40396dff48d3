"""Multivariate Student-t distributions in two and three dimensions.

``sigma`` is always the *scale* matrix. The covariance, defined for
``nu > 2``, is ``nu / (nu - 2) * sigma`` and is available through
:meth:`MvtDist.covariance`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.linalg import solve_triangular

from .camera import Camera, para_perspective_at
from .errors import NotPositiveDefinite, RankDeficientMap


def _cholesky(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("scale matrix is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class MvtDist:
    """Multivariate t with location ``mu``, scale ``sigma`` and ``nu`` dof.

    ``nu = inf`` is accepted and denotes the Gaussian limit.
    """

    mu: np.ndarray
    sigma: np.ndarray
    nu: float

    dim = None

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        d = mu.shape[0]
        if self.dim is not None and d != self.dim:
            raise ValueError(f"{type(self).__name__} needs a {self.dim}-vector mean, got {d}")
        sigma = np.array(self.sigma, dtype=float).reshape(d, d)
        if np.linalg.norm(sigma - sigma.T) >= 1e-12 * max(1.0, np.linalg.norm(sigma)):
            raise ValueError("scale matrix is not symmetric")
        if not self.nu > 0:
            raise ValueError(f"degrees of freedom must be positive, got {self.nu}")
        chol = _cholesky(sigma)
        for arr in (mu, sigma, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "_chol", chol)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of the scale matrix."""
        return self._chol

    def covariance(self) -> np.ndarray:
        """``nu / (nu - 2) * sigma``; infinite for ``nu <= 2``."""
        if math.isinf(self.nu):
            return self.sigma.copy()
        if self.nu <= 2:
            return np.full_like(self.sigma, np.inf)
        return self.nu / (self.nu - 2.0) * self.sigma

    def mahalanobis2(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        r = (x - self.mu).reshape(-1, self.d).T
        w = solve_triangular(self._chol, r, lower=True)
        m2 = np.sum(w * w, axis=0)
        return float(m2[0]) if x.ndim == 1 else m2.reshape(x.shape[:-1])

    def __eq__(self, other):
        if not isinstance(other, MvtDist):
            return NotImplemented
        return (
            self.nu == other.nu
            and np.array_equal(self.mu, other.mu)
            and np.array_equal(self.sigma, other.sigma)
        )

    __hash__ = None


class MvtDist3(MvtDist):
    dim = 3


class MvtDist2(MvtDist):
    dim = 2


def make_dist(mu, sigma, nu) -> MvtDist:
    """Build an ``MvtDist2``/``MvtDist3`` according to the length of ``mu``."""
    d = np.asarray(mu).reshape(-1).shape[0]
    cls = {2: MvtDist2, 3: MvtDist3}.get(d, MvtDist)
    return cls(mu, sigma, nu)


def nll(dist: MvtDist, x):
    """Negative log density up to an additive constant.

    ``0.5 * log|sigma| + (nu + d) / 2 * log(1 + m2 / nu)``, where ``m2`` is the
    squared Mahalanobis distance of ``x``. In the Gaussian limit the second
    term becomes ``m2 / 2``. Vectorised over leading axes of ``x``.
    """
    half_logdet = float(np.sum(np.log(np.diag(dist.chol))))
    m2 = dist.mahalanobis2(x)
    if math.isinf(dist.nu):
        return half_logdet + 0.5 * m2
    return half_logdet + 0.5 * (dist.nu + dist.d) * np.log1p(m2 / dist.nu)


def affine_pushforward(dist: MvtDist, A, b) -> MvtDist:
    """Distribution of ``A x + b`` for ``x ~ dist``.

    Raises
    ------
    RankDeficientMap
        If ``A sigma A^T`` is not positive definite.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    S = A @ dist.sigma @ A.T
    S = 0.5 * (S + S.T)
    try:
        return make_dist(A @ dist.mu + b, S, dist.nu)
    except NotPositiveDefinite as exc:
        raise RankDeficientMap("pushed-forward scale matrix is singular") from exc


def project_to_camera(dist: MvtDist3, cam: Camera, mode: str = "norm") -> MvtDist2:
    """Push a 3D keypoint distribution onto ``cam``'s image plane (pixels)."""
    pmap = para_perspective_at(cam, dist.mu, mode=mode)
    return affine_pushforward(dist, pmap.A, pmap.b)


def sample(dist: MvtDist, seed, size: int | None = None) -> np.ndarray:
    """Draw ``mu + L z sqrt(nu / g)`` with ``z ~ N(0, I)``, ``g ~ chi2(nu)``.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`; a fixed
    seed gives identical draws. Returns shape ``(d,)`` when ``size`` is None,
    else ``(size, d)``.
    """
    rng = np.random.default_rng(seed)
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, dist.d))
    if math.isinf(dist.nu):
        scale = np.ones(n)
    else:
        scale = np.sqrt(dist.nu / rng.chisquare(dist.nu, size=n))
    x = dist.mu + (z @ dist.chol.T) * scale[:, None]
    return x[0] if size is None else x


def _f_cdf(x: float, d1: float, d2: float) -> float:
    """F(d1, d2) CDF by quadrature of the beta density it maps onto.

    The endpoint powers of the beta density go into QUADPACK's algebraic
    weight, leaving a smooth integrand even when a shape parameter is below 1.
    """
    if x <= 0:
        return 0.0
    a, b = 0.5 * d1, 0.5 * d2
    u = d1 * x / (d1 * x + d2)
    norm = math.exp(-special.betaln(a, b))
    opts = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
    # integrate whichever side of u is shorter for accuracy near 1
    if u <= 0.5:
        val, _ = integrate.quad(lambda t: (1.0 - t) ** (b - 1.0), 0.0, u, weight="alg", wvar=(a - 1.0, 0.0), **opts)
        return norm * val
    val, _ = integrate.quad(lambda t: t ** (a - 1.0), u, 1.0, weight="alg", wvar=(0.0, b - 1.0), **opts)
    return 1.0 - norm * val


def _chi2_cdf(x: float, d: float) -> float:
    if x <= 0:
        return 0.0
    k = 0.5 * d
    log_norm = special.gammaln(k) + k * math.log(2.0)

    def density(t):
        if t <= 0.0:
            return 0.0
        return math.exp((k - 1) * math.log(t) - 0.5 * t - log_norm)

    val, _ = integrate.quad(density, 0.0, x, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def mahalanobis2_cdf(r2: float, d: int, nu: float) -> float:
    """``P(m2 <= r2)`` for a ``d``-dimensional t; ``m2 / d ~ F(d, nu)``."""
    if math.isinf(nu):
        return _chi2_cdf(r2, d)
    return _f_cdf(r2 / d, d, nu)


@lru_cache(maxsize=256)
def _radius2(d: int, nu: float, level: float, tol: float) -> float:
    lo, hi = 0.0, float(d)
    while mahalanobis2_cdf(hi, d, nu) < level:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mahalanobis2_cdf(mid, d, nu) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def confidence_radius2(dist: MvtDist, level: float, tol: float = 1e-10) -> float:
    """Squared Mahalanobis radius of the ``level`` confidence ellipsoid.

    Bisection on a quadrature-evaluated F CDF. ``dist`` may also be a
    ``(d, nu)`` tuple.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    d, nu = (dist.d, dist.nu) if isinstance(dist, MvtDist) else dist
    return _radius2(int(d), float(nu), float(level), float(tol))
