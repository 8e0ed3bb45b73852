"""Pilot design and LMMSE channel-estimation statistics.

A pilot matrix ``Xp`` (``Nt x Lp``) enters every bound only through its Gram
matrix ``Xp Xp^H``, so designs are stored as eigen-powers ``p`` over a basis
``U``: ``Xp Xp^H = U diag(p) U^H``.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .channelmodel import CovarianceSpec, exp_correlation, identity_covariance
from .errors import ConfigError, DomainError, InsufficientTrainingError
from .matrixcore import as_matrix, box_muller, check_hermitian, hermitian_eig, psd_inverse
from .waterfill import waterfill


@dataclass(frozen=True, eq=False)
class PilotDesign:
    basis: np.ndarray
    powers: np.ndarray  # per-eigenchannel pilot energy, descending
    lp: int  # effective training length
    pp: float  # pilot power per transmission
    level: Optional[float] = None  # water level mu for CCF designs
    requested_lp: Optional[int] = None
    reduced: bool = False  # water-filling trained fewer than requested_lp channels

    @property
    def nt(self):
        return self.powers.size

    @property
    def gram(self):
        return (self.basis * self.powers) @ self.basis.conj().T

    @property
    def energy(self):
        return float(self.pp * (self.requested_lp or self.lp))


@dataclass(frozen=True, eq=False)
class EstimationModel:
    r_tilde: np.ndarray  # error covariance
    r_hat: np.ndarray  # estimate covariance
    tilde_eig: np.ndarray  # in the covariance eigenbasis, aligned with g
    hat_eig: np.ndarray
    basis: np.ndarray


def iid_orthogonal_pilots(nt, pp, lp):
    """Orthogonal equal-power pilots, Gram ``(pp * lp / nt) * I``."""
    if pp <= 0:
        raise DomainError(f"pilot power must be positive, got {pp}")
    if lp < nt:
        raise InsufficientTrainingError(f"orthogonal pilots need lp >= nt ({lp} < {nt})", field="pilot_len")
    powers = np.full(nt, pp * lp / nt)
    return PilotDesign(np.eye(nt, dtype=np.complex128), powers, lp, float(pp), requested_lp=lp)


def ccf_pilots(cov, pp, lp):
    """Train the ``lp`` strongest eigen-channels with water-filled energy.

    If the water level leaves some of those channels dark, the design comes
    back with ``reduced=True`` and ``lp`` set to the number actually trained.
    """
    nt = cov.n
    if not 1 <= lp <= nt:
        raise ConfigError(f"CCF training length must be in [1, {nt}], got {lp}", field="pilot_len")
    if pp <= 0:
        raise DomainError(f"pilot power must be positive, got {pp}")
    wf = waterfill(cov.eigvalues[:lp], pp * lp)
    powers = np.zeros(nt)
    powers[:lp] = wf.alloc
    return PilotDesign(
        cov.eigbasis, powers, wf.active, float(pp), level=wf.level, requested_lp=lp, reduced=wf.active < lp
    )


def _powers_in_basis(cov, pilot):
    if pilot.basis is cov.eigbasis or np.array_equal(pilot.basis, cov.eigbasis):
        return np.asarray(pilot.powers, dtype=float)
    gram = pilot.gram
    scale = max(1.0, float(np.max(np.abs(gram))) * float(np.max(np.abs(cov.matrix))))
    if np.max(np.abs(gram @ cov.matrix - cov.matrix @ gram)) > 1e-9 * scale:
        raise ConfigError("pilot basis does not diagonalise the channel covariance")
    u = cov.eigbasis
    return np.real(np.einsum("ij,jk,ki->i", u.conj().T, gram, u))


def estimation_stats(cov, pilot):
    """Error and estimate covariances induced by a pilot design.

    ``r_tilde = (R^-1 + Xp Xp^H)^-1`` and ``r_hat = R - r_tilde``. The eigen
    forms use ``1 / (1/g_i + p_i)`` directly in the covariance eigenbasis.
    """
    if pilot.nt != cov.n:
        raise ConfigError(f"pilot design is for {pilot.nt} antennas, covariance for {cov.n}")
    p = _powers_in_basis(cov, pilot)
    g = cov.eigvalues
    tilde = 1.0 / (1.0 / g + p)
    r_tilde = psd_inverse(psd_inverse(cov.matrix) + pilot.gram)
    r_hat = cov.matrix - r_tilde
    return EstimationModel(r_tilde, r_hat, tilde, g - tilde, cov.eigbasis)


def pilot_matrix(pilot):
    """An explicit ``Nt x Lp`` pilot matrix with the design's Gram.

    The right unitary factor is free; identity rows are used when every pilot
    slot trains its own eigen-channel, normalised DFT rows otherwise.
    """
    lp = pilot.requested_lp or pilot.lp
    k = int(np.count_nonzero(pilot.powers))
    left = pilot.basis[:, :k] * np.sqrt(pilot.powers[:k])
    if k == lp:
        right = np.eye(lp, dtype=np.complex128)
    else:
        j = np.arange(k)[:, None]
        n = np.arange(lp)[None, :]
        right = np.exp(-2j * np.pi * j * n / lp) / np.sqrt(lp)
    return left @ right


def lmmse_estimate(y, xp, cov):
    """``H_hat = Y (Xp^H R Xp + I)^-1 Xp^H R``."""
    y = as_matrix(y)
    xp = as_matrix(xp)
    r = cov.matrix
    if xp.shape[0] != r.shape[0] or y.shape[1] != xp.shape[1]:
        raise DomainError(f"inconsistent shapes Y{y.shape}, Xp{xp.shape}, R{r.shape}")
    lp = xp.shape[1]
    core = xp.conj().T @ r @ xp + np.eye(lp)
    return y @ psd_inverse(core) @ xp.conj().T @ r


def worst_case_mse(pilot_gram, corr_samples):
    """Largest total MSE ``tr((R^-1 + Gram)^-1)`` over a set of correlations."""
    gram = check_hermitian(pilot_gram)
    if hermitian_eig(gram).values[-1] < -1e-10:
        raise DomainError("pilot Gram must be positive semi-definite")
    if len(corr_samples) == 0:
        raise DomainError("empty correlation sample set")
    nt = gram.shape[0]
    rs = np.stack([c.matrix for c in corr_samples])
    if rs.shape[1:] != (nt, nt):
        raise DomainError("correlation and Gram sizes differ")
    traces = np.real(np.trace(rs, axis1=1, axis2=2))
    if np.any(np.abs(traces - nt) > 1e-8 * nt):
        raise DomainError("every correlation sample must have trace Nt")
    # (R^-1 + G)^-1 = R (I + G R)^-1
    err = rs @ np.linalg.inv(np.eye(nt) + gram @ rs)
    return float(np.max(np.real(np.trace(err, axis1=1, axis2=2))))


def sample_correlation_set(nt, count, stream):
    """Identity, the exponential family and ``count`` random trace-``nt`` PD matrices."""
    out = [identity_covariance(nt)]
    out += [exp_correlation(nt, rho) for rho in np.arange(1, 10) / 10]
    gen = stream.generator()
    for _ in range(count):
        g = box_muller(gen, nt * nt).reshape(nt, nt)
        a = g @ g.conj().T + 1e-3 * np.eye(nt)
        a *= nt / np.real(np.trace(a))
        out.append(CovarianceSpec.from_matrix(0.5 * (a + a.conj().T)))
    return out


class MinimaxCertificate(NamedTuple):
    equal_power_worst: float
    closed_form: float
    best_random_worst: float
    holds: bool


def minimax_certificate(nt, total_energy, n_grams, n_corr, stream, tol=1e-9):
    """Check that no random diagonal Gram beats equal-power pilots in the worst case."""
    corr = sample_correlation_set(nt, n_corr, stream.substream(0))
    equal = worst_case_mse(np.eye(nt) * total_energy / nt, corr)
    closed = nt / (1.0 + total_energy / nt)
    gen = stream.substream(1).generator()
    best = np.inf
    for _ in range(n_grams):
        w = -np.log1p(-gen.random(nt))  # uniform point on the simplex
        p = total_energy * w / w.sum()
        best = min(best, worst_case_mse(np.diag(p), corr))
    return MinimaxCertificate(equal, closed, float(best), bool(best >= equal - tol))
