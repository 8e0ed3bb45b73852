"""Transmit-side spatial correlation and correlated channel sampling."""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, NotComparableError, NotPSDError
from .matrixcore import check_hermitian, hermitian_eig, psd_sqrt, sample_zmcscg

MAJORIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Positive definite transmit correlation matrix with cached eigen data.

    ``eigvalues`` are descending and ``eigbasis`` holds the matching
    eigenvectors in its columns.
    """

    matrix: np.ndarray
    eigvalues: np.ndarray = field(repr=False)
    eigbasis: np.ndarray = field(repr=False)
    sqrt: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, matrix):
        m = check_hermitian(matrix)
        eig = hermitian_eig(m)
        if eig.values[-1] <= 0:
            raise NotPSDError(f"covariance is not positive definite (min eigenvalue {eig.values[-1]:.3e})")
        for arr in (m, eig.values, eig.vectors):
            arr.setflags(write=False)
        root = psd_sqrt(m)
        root.setflags(write=False)
        return cls(m, eig.values, eig.vectors, root)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def is_identity(self):
        return bool(np.array_equal(self.matrix, np.eye(self.n)))


@lru_cache(maxsize=None)
def identity_covariance(n):
    return CovarianceSpec.from_matrix(np.eye(n))


def exp_correlation(n, rho):
    """Exponential correlation model, entries ``rho**|i-j|``."""
    if n < 1:
        raise DomainError("need at least one antenna")
    if rho < 0:
        raise DomainError(f"rho must be nonnegative, got {rho}")
    if rho >= 1:
        raise DomainError(f"rho={rho} gives a singular correlation model")
    idx = np.arange(n)
    return CovarianceSpec.from_matrix(rho ** np.abs(idx[:, None] - idx[None, :]).astype(float))


def majorizes(a, b, tol=MAJORIZATION_TOL):
    """True when ``a`` is majorized by ``b`` (``a`` is the less spread vector)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("majorization needs two 1-D vectors of equal length")
    if abs(a.sum() - b.sum()) > tol:
        raise NotComparableError(f"sums differ: {a.sum()} vs {b.sum()}")
    pa = np.cumsum(np.sort(a)[::-1])
    pb = np.cumsum(np.sort(b)[::-1])
    return bool(np.all(pa[:-1] <= pb[:-1] + tol))


def sample_channel(cov, nr, stream):
    """One realization ``H = H0 @ R^{1/2}`` of shape ``(nr, nt)``."""
    h0 = sample_zmcscg(nr, cov.n, stream)
    return h0 @ cov.sqrt
