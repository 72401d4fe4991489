"""Dense linear-algebra helpers, Gaussian type and Gaussian-expectation quadrature.

Everything downstream (environments, the disturbance estimator, the training
engine) goes through this module for randomness and covariance handling, so
the rules живут here once:

* covariances get a positive-definite floor before factorization
  (``regularize_cov``), sized relative to their trace;
* the default expectation scheme is a deterministic 2n+1 unscented point set
  that is exact for quadratic integrands;
* all randomness flows through ``RngStream`` (counter-based Philox), so a
  64-bit seed fully determines every sample on every platform and independent
  substreams can be split off by index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NotPositiveDefiniteError",
    "QuadratureError",
    "RngStream",
    "Gaussian",
    "regularize_cov",
    "cov_cholesky",
    "cholesky",
    "solve_spd",
    "sample_gaussian",
    "sigma_points",
    "expect_gaussian",
]

#: Relative symmetry slack for covariance matrices: ``max|K - K^T|`` must not
#: exceed this times ``max|K|``.
SYMMETRY_RTOL = 1e-12

#: Scale of the positive-definite floor added by :func:`regularize_cov`.
REGULARIZATION_EPS = 1e-10


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be symmetric positive definite is not."""


class QuadratureError(ArithmeticError):
    """The integrand returned a non-finite value at a quadrature node."""


def _mix64(a: int, b: int) -> int:
    # splitmix64-style combine, used to derive nested substream indices
    z = (a * 0x9E3779B97F4A7C15 + b) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


class RngStream:
    """Counter-based random stream with cheap, collision-free splitting.

    Built on Philox, keyed by ``(seed, stream)``: the same seed reproduces the
    same sequence everywhere, and ``substream(i)`` yields an independent
    stream for any index without consuming state from the parent.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, *indices: int) -> "RngStream":
        """Independent stream derived from this one by an index path."""
        s = self.stream
        for ix in indices:
            s = _mix64(s, int(ix) & 0xFFFFFFFFFFFFFFFF)
        return RngStream(self.seed, s)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def _check_square(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} contains non-finite entries")
    return mat


def _check_symmetric(mat: np.ndarray, name: str) -> np.ndarray:
    mat = _check_square(mat, name)
    scale = np.abs(mat).max()
    skew = np.abs(mat - mat.T).max()
    if skew > SYMMETRY_RTOL * max(scale, 1e-300):
        raise NotPositiveDefiniteError(
            f"{name} is not symmetric: max|M - M^T| = {skew:g} vs max|M| = {scale:g}"
        )
    # fold residual round-off so factorizations see an exactly symmetric matrix
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal with validated mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or not np.all(np.isfinite(mean)):
            raise ValueError("mean must be a finite vector")
        cov = _check_symmetric(self.cov, "cov")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError(
                f"dimension mismatch: mean has {mean.shape[0]} entries, "
                f"cov is {cov.shape[0]}x{cov.shape[1]}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def chol(self) -> np.ndarray:
        """Cached (conditionally floored) Cholesky factor of the covariance."""
        low = getattr(self, "_chol", None)
        if low is None:
            low = cov_cholesky(self.cov)
            object.__setattr__(self, "_chol", low)
        return low

    @classmethod
    def point_mass(cls, mean) -> "Gaussian":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, np.zeros((mean.size, mean.size)))


def regularize_cov(cov: np.ndarray) -> np.ndarray:
    """Add the positive-definite floor ``eps*I``, eps = 1e-10*max(1, trace/n).

    Keeps degenerate covariances (zero rows, collapsed estimates) factorizable
    without visibly perturbing well-scaled ones.
    """
    cov = _check_symmetric(cov, "cov")
    n = cov.shape[0]
    eps = REGULARIZATION_EPS * max(1.0, float(np.trace(cov)) / n)
    return cov + eps * np.eye(n)


def cov_cholesky(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor of a covariance, flooring only when it has to.

    A strictly positive definite covariance is factored untouched (its
    samples and quadrature nodes reproduce it exactly, however small its
    entries); the floor kicks in only for semi-definite/degenerate input.
    """
    cov = _check_symmetric(cov, "cov")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(regularize_cov(cov))


def cholesky(mat: np.ndarray, *, regularize: bool = False) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == mat.

    Raises :class:`NotPositiveDefiniteError` when the (optionally floored)
    matrix is not positive definite.
    """
    mat = _check_symmetric(mat, "mat")
    if regularize:
        mat = regularize_cov(mat)
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Cholesky failed: {exc}") from exc


def solve_spd(mat: np.ndarray, rhs: np.ndarray, *, regularize: bool = False) -> np.ndarray:
    """Solve ``mat @ y = rhs`` for symmetric positive definite ``mat``.

    Uses the Cholesky factor (two triangular solves); never forms an inverse.
    ``rhs`` may be a vector or a matrix of stacked right-hand sides.
    """
    low = cholesky(mat, regularize=regularize)
    rhs = np.asarray(rhs, dtype=float)
    half = np.linalg.solve(low, rhs)
    return np.linalg.solve(low.T, half)


def inv_spd(mat: np.ndarray, *, regularize: bool = False) -> np.ndarray:
    """Explicit inverse of an SPD matrix, via its Cholesky factor."""
    low = cholesky(mat, regularize=regularize)
    eye = np.eye(mat.shape[0])
    half = np.linalg.solve(low, eye)
    return np.linalg.solve(low.T, half)


def sample_gaussian(dist: Gaussian, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Draw from ``dist`` as ``mean + L z`` with L the floored Cholesky factor.

    ``size=None`` returns one vector of shape (n,); otherwise shape (size, n).
    """
    low = dist.chol()
    if size is None:
        z = rng.standard_normal(dist.dim)
        return dist.mean + low @ z
    z = rng.standard_normal((size, dist.dim))
    return dist.mean + z @ low.T


def sigma_points(dist: Gaussian) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 2n+1 unscented point set for ``dist`` (kappa = 0).

    Returns ``(points, weights)`` with the center point first (weight 0 at
    kappa = 0) followed by ``mean +- column_i(sqrt(n * cov))``. The induced
    quadrature reproduces mean and covariance exactly, hence integrates every
    polynomial of degree <= 2 (and odd cubics, by symmetry) without error.
    """
    n = dist.dim
    spread = np.sqrt(float(n)) * dist.chol()
    points = np.empty((2 * n + 1, n))
    points[0] = dist.mean
    points[1 : n + 1] = dist.mean + spread.T
    points[n + 1 :] = dist.mean - spread.T
    weights = np.full(2 * n + 1, 1.0 / (2 * n))
    weights[0] = 0.0
    return points, weights


def expect_gaussian(
    g,
    dist: Gaussian,
    scheme: str = "sigma_point",
    rng: RngStream | None = None,
    num_samples: int = 10_000,
):
    """Expectation of ``g(xi)`` over ``xi ~ dist``.

    ``scheme="sigma_point"`` uses the deterministic unscented set (exact for
    quadratic ``g``); ``scheme="monte_carlo"`` averages ``num_samples`` seeded
    draws and requires ``rng``. ``g`` may return a scalar or a vector.
    """
    if scheme == "sigma_point":
        points, weights = sigma_points(dist)
    elif scheme == "monte_carlo":
        if rng is None:
            raise ValueError("monte_carlo scheme needs an RngStream")
        points = sample_gaussian(dist, rng, size=num_samples)
        weights = np.full(num_samples, 1.0 / num_samples)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    total = None
    for j in range(points.shape[0]):
        val = np.asarray(g(points[j]), dtype=float)
        if not np.all(np.isfinite(val)):
            raise QuadratureError(
                f"integrand returned non-finite value {val} at node {j}: {points[j]}"
            )
        total = weights[j] * val if total is None else total + weights[j] * val
    if total.ndim == 0:
        return float(total)
    return total
