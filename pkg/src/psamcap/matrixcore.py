"""Small dense complex-matrix kernel.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. The Hermitian
eigensolver is a cyclic Jacobi iteration that also runs over stacks of
matrices (shape ``(..., n, n)``), which is what the Monte-Carlo code uses
to diagonalise thousands of small Wishart matrices at once.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, NotHermitianError, NotPSDError, SingularMatrixError

HERMITIAN_TOL = 1e-10
MAX_SWEEPS = 60


class HermitianEig(NamedTuple):
    values: np.ndarray  # real, descending
    vectors: np.ndarray  # unitary, eigenvectors in columns


def as_matrix(a):
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DomainError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    return m


def check_hermitian(a, tol=HERMITIAN_TOL):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise NotHermitianError(f"matrix is not square: {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if np.max(np.abs(a - a.conj().T), initial=0.0) > tol * scale:
        raise NotHermitianError("matrix is not Hermitian")
    return a


def _jacobi_sweeps(a, want_vectors):
    """Cyclic Jacobi on a stack ``(B, n, n)``; modifies ``a`` in place."""
    b, n, _ = a.shape
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), (b, n, n)).copy() if want_vectors else None
    rows = np.arange(b)
    offmask = ~np.eye(n, dtype=bool)
    scale = np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2)))
    scale[scale == 0] = 1.0
    for _ in range(MAX_SWEEPS):
        off = np.sqrt(np.sum(np.abs(a * offmask) ** 2, axis=(1, 2)))
        if np.all(off <= 1e-15 * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                r = np.abs(apq)
                active = r > 1e-300
                if not np.any(active):
                    continue
                phase = np.where(active, apq / np.where(active, r, 1.0), 1.0)
                app = a[:, p, p].real
                aqq = a[:, q, q].real
                safe_r = np.where(active, r, 1.0)
                tau = (aqq - app) / (2.0 * safe_r)
                big = np.abs(tau) > 1e150
                tau = np.where(big, 1.0, tau)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(big, safe_r / np.where(aqq - app == 0, 1.0, aqq - app), t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # column transform V = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                v00 = c
                v01 = s
                v10 = -s * phase.conj()
                v11 = c * phase.conj()
                colp = a[:, :, p].copy()
                colq = a[:, :, q]
                a[:, :, p] = colp * v00[:, None] + colq * v10[:, None]
                a[:, :, q] = colp * v01[:, None] + colq * v11[:, None]
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :]
                a[:, p, :] = rowp * np.conj(v00)[:, None] + rowq * np.conj(v10)[:, None]
                a[:, q, :] = rowp * np.conj(v01)[:, None] + rowq * np.conj(v11)[:, None]
                a[rows, p, q] = np.where(active, 0.0, a[rows, p, q])
                a[rows, q, p] = np.where(active, 0.0, a[rows, q, p])
                a[rows, p, p] = a[rows, p, p].real
                a[rows, q, q] = a[rows, q, q].real
                if want_vectors:
                    vp = v[:, :, p].copy()
                    vq = v[:, :, q]
                    v[:, :, p] = vp * v00[:, None] + vq * v10[:, None]
                    v[:, :, q] = vp * v01[:, None] + vq * v11[:, None]
    return np.diagonal(a, axis1=1, axis2=2).real.copy(), v


def _sort_desc(values):
    # descending value; exact ties go to the higher diagonal index first
    idx = np.broadcast_to(np.arange(values.shape[-1]), values.shape)
    return np.lexsort((-idx, -values), axis=-1)


def hermitian_eig(a):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching unitary matrix
    of column eigenvectors, so that ``a == U @ diag(values) @ U^H``.
    """
    a = check_hermitian(a)
    herm = 0.5 * (a + a.conj().T)
    values, vectors = _jacobi_sweeps(herm[None].copy(), want_vectors=True)
    order = _sort_desc(values[0])
    return HermitianEig(values[0][order], vectors[0][:, order])


def hermitian_eigvals_batch(stack):
    """Descending eigenvalues of every Hermitian matrix in ``stack`` (..., n, n)."""
    stack = np.asarray(stack, dtype=np.complex128)
    lead = stack.shape[:-2]
    n = stack.shape[-1]
    flat = stack.reshape(-1, n, n)
    flat = 0.5 * (flat + np.conj(np.swapaxes(flat, 1, 2)))
    values, _ = _jacobi_sweeps(flat.copy(), want_vectors=False)
    values = -np.sort(-values, axis=1)
    return values.reshape(*lead, n)


def psd_sqrt(a):
    """Hermitian square root of a positive semi-definite matrix."""
    eig = hermitian_eig(a)
    scale = max(1.0, float(np.max(np.abs(eig.values))))
    if eig.values[-1] < -HERMITIAN_TOL * scale:
        raise NotPSDError(f"matrix has negative eigenvalue {eig.values[-1]:.3e}")
    root = np.sqrt(np.clip(eig.values, 0.0, None))
    s = (eig.vectors * root) @ eig.vectors.conj().T
    return 0.5 * (s + s.conj().T)


def psd_inverse(a):
    eig = hermitian_eig(a)
    if eig.values[-1] <= 1e-12:
        raise SingularMatrixError("matrix is not safely invertible", float(eig.values[-1]))
    inv = (eig.vectors / eig.values) @ eig.vectors.conj().T
    return 0.5 * (inv + inv.conj().T)


@dataclass(frozen=True)
class RandomStream:
    """Deterministic counter-based random stream.

    A stream is a value: ``seed`` is the 64-bit Philox key and ``path`` picks a
    disjoint counter block, so ``substream(t)`` for Monte-Carlo trial ``t``
    always yields the same numbers no matter which worker draws them.
    """

    seed: int
    path: tuple = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")
        if len(self.path) > 3:
            raise DomainError("substream nesting deeper than 3 levels")

    def substream(self, index):
        if index < 0:
            raise DomainError("substream index must be nonnegative")
        return RandomStream(self.seed, self.path + (int(index),))

    def generator(self):
        counter = [0, 0, 0, 0]
        # word 0 is the running counter; higher words select the block
        for k, word in enumerate(self.path):
            counter[3 - k] = word
        return np.random.Generator(np.random.Philox(key=self.seed, counter=counter))


def box_muller(gen, count):
    """``count`` unit-variance circularly symmetric complex Gaussians."""
    u = gen.random(2 * count).reshape(count, 2)
    radius = np.sqrt(-np.log1p(-u[:, 0]))  # 1 - u lies in (0, 1]
    return radius * np.exp(2j * np.pi * u[:, 1])


def sample_zmcscg(rows, cols, stream):
    """i.i.d. ZMCSCG matrix with unit variance per complex entry."""
    return box_muller(stream.generator(), rows * cols).reshape(rows, cols)
