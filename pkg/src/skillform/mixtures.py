"""Finite Gaussian mixtures over latent log-vectors.

Used both as the initial-condition law inside a ModelSpec and as the
first-step estimate of the joint latent distribution.  Quantiles of 1-d
marginals have no closed form and are found by bisection on the CDF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr  # standard normal cdf, vectorized

__all__ = ["MixtureModel", "bisect_scalar"]

_EIG_FLOOR = 1e-10


def bisect_scalar(f, lo, hi, tol=1e-12, max_iter=200):
    """Root of a monotone scalar function by bisection.

    Raises ValueError when [lo, hi] does not bracket a sign change.  The
    returned point has |bracket| <= tol * max(1, |root|).
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(f"bisection bracket [{lo}, {hi}] does not contain a root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Gaussian mixture: weights (K,), means (K, dim), covs (K, dim, dim)."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        m = np.asarray(self.means, dtype=np.float64).copy()
        c = np.asarray(self.covs, dtype=np.float64).copy()
        if m.ndim == 1:
            m = m[None, :]
        if c.ndim == 2:
            c = c[None, :, :]
        K, dim = m.shape
        if w.shape != (K,) or c.shape != (K, dim, dim):
            raise ValueError("inconsistent mixture shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("mixture weights must be a probability vector")
        for k in range(K):
            if not np.allclose(c[k], c[k].T, rtol=0, atol=1e-10):
                raise ValueError(f"component {k} covariance is not symmetric")
            c[k] = 0.5 * (c[k] + c[k].T)
            if np.linalg.eigvalsh(c[k])[0] <= _EIG_FLOOR:
                raise ValueError(f"component {k} covariance is not positive definite")
        for arr in (w, m, c):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MixtureModel):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.covs, other.covs)
        )

    # -- moments ------------------------------------------------------------

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def cov(self) -> np.ndarray:
        mu = self.mean()
        out = np.zeros((self.dim, self.dim))
        for k in range(self.K):
            d = self.means[k] - mu
            out += self.weights[k] * (self.covs[k] + np.outer(d, d))
        return out

    # -- transforms ----------------------------------------------------------

    def affine(self, A: np.ndarray, b: np.ndarray) -> "MixtureModel":
        """Law of A x + b."""
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        means = self.means @ A.T + b
        covs = np.einsum("ij,kjl,ml->kim", A, self.covs, A)
        return MixtureModel(weights=self.weights, means=means, covs=covs)

    def marginal(self, idx) -> "MixtureModel":
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        return MixtureModel(
            weights=self.weights,
            means=self.means[:, idx],
            covs=self.covs[:, idx[:, None], idx[None, :]],
        )

    # -- 1-d marginal distribution -------------------------------------------

    def _check_1d(self):
        if self.dim != 1:
            raise ValueError("scalar cdf/quantile requires a 1-d mixture")

    def cdf1(self, x) -> np.ndarray:
        """CDF of a 1-d mixture, vectorized in x."""
        self._check_1d()
        x = np.asarray(x, dtype=np.float64)
        mus = self.means[:, 0]
        sds = np.sqrt(self.covs[:, 0, 0])
        z = (x[..., None] - mus) / sds
        return ndtr(z) @ self.weights

    def pdf1(self, x) -> np.ndarray:
        self._check_1d()
        x = np.asarray(x, dtype=np.float64)
        mus = self.means[:, 0]
        var = self.covs[:, 0, 0]
        z2 = (x[..., None] - mus) ** 2 / var
        dens = np.exp(-0.5 * z2) / np.sqrt(2.0 * np.pi * var)
        return dens @ self.weights

    def quantile1(self, alpha, tol=1e-10) -> float:
        """Quantile of a 1-d mixture by bisection on the CDF."""
        self._check_1d()
        alpha = float(alpha)
        if not 0.0 < alpha < 1.0:
            raise ValueError("quantile level must be strictly inside (0, 1)")
        mus = self.means[:, 0]
        sds = np.sqrt(self.covs[:, 0, 0])
        lo = float(np.min(mus - 10.0 * sds))
        hi = float(np.max(mus + 10.0 * sds))
        # widen until the bracket straddles alpha (cheap; cdf is monotone)
        while self.cdf1(np.array(lo)) > alpha:
            lo -= 10.0 * float(np.max(sds))
        while self.cdf1(np.array(hi)) < alpha:
            hi += 10.0 * float(np.max(sds))
        return bisect_scalar(lambda x: float(self.cdf1(np.array(x))) - alpha, lo, hi, tol=tol)

    # -- sampling -------------------------------------------------------------

    def draw(self, J: int, rng: np.random.Generator) -> np.ndarray:
        """J iid draws, shape (J, dim)."""
        comp = rng.choice(self.K, size=J, p=self.weights)
        z = rng.standard_normal((J, self.dim))
        chols = np.linalg.cholesky(self.covs)
        return self.means[comp] + np.einsum("jkl,jl->jk", chols[comp], z)
