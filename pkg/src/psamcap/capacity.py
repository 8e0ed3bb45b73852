"""Monte-Carlo capacity bounds for pilot-assisted block-fading MIMO links.

Every scheme is reduced to one or more *segments*: a run of data symbols
with a fixed input covariance ``Q``. A segment carries its share of the
block (``symbols / L``), the per-trial lower bound ``log2 det(I + Hhat^H Hhat
Q / (1 + tr(R_tilde Q)))`` and the weights ``w`` with ``x^H R_tilde x =
sum(w_i |z_i|^2)`` for a unit Gaussian ``z``, which the upper-bound gap
needs. The estimate ``Hhat`` is sampled through its statistics,
``Hhat = Hhat0 R_hat^{1/2}``, in the eigenbasis shared by ``R_hat`` and ``Q``.

Trial ``t`` always draws from ``RandomStream(seed).substream(t)``, so the
estimates do not depend on the number of workers.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .channelmodel import CovarianceSpec, identity_covariance
from .errors import ConfigError, DomainError, InsufficientSamplingError
from .estimation import ccf_pilots, estimation_stats, iid_orthogonal_pilots
from .matrixcore import RandomStream, box_muller, hermitian_eigvals_batch
from .waterfill import waterfill_batch

GAP_INPUT_DRAWS = 32
MIN_GAP_TRIALS = 100


# --- scheme variants -------------------------------------------------------


@dataclass(frozen=True)
class NonFeedback:
    cov: Optional[CovarianceSpec] = None  # None means i.i.d.


@dataclass(frozen=True)
class CgfDelayless:
    pass


@dataclass(frozen=True)
class CgfDelayed:
    d: int
    phi: float


@dataclass(frozen=True)
class Ccf:
    cov: CovarianceSpec
    split: Optional[tuple] = None  # data-power fractions over trained channels; None = equal


@dataclass(frozen=True)
class Beamforming:
    cov: CovarianceSpec


@dataclass(frozen=True)
class SchemeConfig:
    """One operating point: antennas, block layout, power and scheme.

    ``P`` is the average power per transmission (linear, noise variance 1)
    and ``alpha`` the fraction of the block energy spent on data.
    """

    nt: int
    nr: int
    L: int
    lp: int
    P: float
    alpha: float
    scheme: object = field(default_factory=NonFeedback)

    def __post_init__(self):
        if self.nt < 1 or self.nr < 1:
            raise ConfigError("antenna counts must be positive", field="nt")
        if not 1 <= self.lp < self.L:
            raise ConfigError(f"need 1 <= pilot_len < block_len, got {self.lp}, {self.L}", field="pilot_len")
        if not (self.P > 0 and np.isfinite(self.P)):
            raise ConfigError(f"power must be positive, got {self.P}", field="snr_db")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}", field="alpha")
        s = self.scheme
        if isinstance(s, (NonFeedback, CgfDelayless, CgfDelayed)) and self.lp < self.nt:
            raise ConfigError(f"orthogonal training needs pilot_len >= nt ({self.lp} < {self.nt})", field="pilot_len")
        if isinstance(s, (NonFeedback, Ccf, Beamforming)) and self.cov.n != self.nt:
            raise ConfigError("covariance size does not match nt", field="rho")
        if isinstance(s, Ccf) and self.lp > self.nt:
            raise ConfigError(f"CCF trains at most nt channels, got pilot_len={self.lp}", field="pilot_len")
        if isinstance(s, Beamforming) and self.lp != 1:
            raise ConfigError("beamforming uses pilot_len = 1", field="pilot_len")
        if isinstance(s, CgfDelayed):
            if not 0 <= s.d <= self.ld:
                raise ConfigError(f"delay must lie in [0, {self.ld}], got {s.d}", field="delay")
            if not 0 <= s.phi <= 1:
                raise ConfigError(f"phi must lie in [0, 1], got {s.phi}", field="phi")
            if s.d == 0 and s.phi != 0:
                raise ConfigError("with delay 0 the non-adaptive sub-block is empty; phi must be 0", field="phi")
            if s.d == self.ld and s.phi != 1:
                raise ConfigError("with delay = data length every symbol is non-adaptive; phi must be 1", field="phi")
        elif not isinstance(s, (NonFeedback, CgfDelayless, Ccf, Beamforming)):
            raise ConfigError(f"unknown scheme {s!r}", field="scheme")
        total = self.pp * self.lp + self.pd * self.ld
        if abs(total - self.P * self.L) > 1e-9 * self.P * self.L:
            raise ConfigError("block energy bookkeeping does not add up")

    @property
    def cov(self):
        return getattr(self.scheme, "cov", None) or identity_covariance(self.nt)

    @property
    def ld(self):
        return self.L - self.lp

    @property
    def pp(self):
        return (1 - self.alpha) * self.P * self.L / self.lp

    @property
    def pd(self):
        return self.alpha * self.P * self.L / self.ld

    @property
    def d(self):
        return self.scheme.d if isinstance(self.scheme, CgfDelayed) else 0

    @property
    def beta(self):
        return self.d / self.ld

    @property
    def phi(self):
        return self.scheme.phi if isinstance(self.scheme, CgfDelayed) else 0.0

    @property
    def pd1(self):
        if self.d == 0:
            return self.pd
        return self.phi / self.beta * self.pd

    @property
    def pd2(self):
        if self.d == self.ld:
            return self.pd
        return (1 - self.phi) / (1 - self.beta) * self.pd

    def with_(self, **changes):
        fields = dict(nt=self.nt, nr=self.nr, L=self.L, lp=self.lp, P=self.P, alpha=self.alpha, scheme=self.scheme)
        fields.update(changes)
        return SchemeConfig(**fields)


@dataclass(frozen=True)
class SimSettings:
    trials: int = 10_000
    seed: int = 42
    workers: int = 1


@dataclass(frozen=True)
class CapacityEstimate:
    mean: float
    stderr: float
    trials: int

    @classmethod
    def from_samples(cls, values):
        values = np.asarray(values, dtype=float)
        n = values.size
        mean = float(np.sum(values) / n)
        stderr = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return cls(mean, stderr, n)


# --- trial pools -------------------------------------------------------------


def _draw_chunk(seed, start, stop, nr, nt, nx):
    base = RandomStream(seed)
    h = np.empty((stop - start, nr, nt), dtype=np.complex128)
    z = np.empty((stop - start, nx, nt), dtype=np.complex128)
    for k, t in enumerate(range(start, stop)):
        gen = base.substream(t).generator()
        h[k] = box_muller(gen, nr * nt).reshape(nr, nt)
        if nx:
            z[k] = box_muller(gen, nx * nt).reshape(nx, nt)
    return h, z


def _chunks(trials, workers):
    edges = np.linspace(0, trials, max(1, workers) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


@lru_cache(maxsize=32)
def _pool(seed, trials, nr, nt, nx, workers):
    spans = _chunks(trials, workers)
    if workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_draw_chunk, *zip(*[(seed, a, b, nr, nt, nx) for a, b in spans])))
    else:
        parts = [_draw_chunk(seed, a, b, nr, nt, nx) for a, b in spans]
    h = np.concatenate([p[0] for p in parts])
    z = np.concatenate([p[1] for p in parts])
    h.setflags(write=False)
    z.setflags(write=False)
    return h, z


def trial_pool(sim, nr, nt, nx=0):
    """Per-trial ``Hhat0`` draws (and ``nx`` input draws) for ``sim``.

    Cached so optimizers reuse the same draws across candidate points.
    """
    if sim.trials < 2:
        raise InsufficientSamplingError("need at least two trials", field="trials")
    return _pool(sim.seed, sim.trials, nr, nt, nx, max(1, sim.workers))


@lru_cache(maxsize=32)
def _wishart(seed, trials, nr, nt, workers):
    h, _ = _pool(seed, trials, nr, nt, 0, workers)
    lam = hermitian_eigvals_batch(np.conj(np.swapaxes(h, 1, 2)) @ h)
    lam = np.clip(lam, 0.0, None)
    lam.setflags(write=False)
    return lam


def wishart_eigs(sim, nr, nt):
    """Descending eigenvalues of ``H0^H H0`` for every trial, shape ``(T, nt)``."""
    trial_pool(sim, nr, nt)
    return _wishart(sim.seed, sim.trials, nr, nt, max(1, sim.workers))


# --- bound kernels -------------------------------------------------------------


def instant_clb(hhat, q, r_tilde):
    """Lower bound for one realization, bits per channel use.

    ``log2 det(I + Hhat^H Hhat Q / (1 + tr(R_tilde Q)))``.
    """
    hhat = np.asarray(hhat, dtype=np.complex128)
    q = np.asarray(q, dtype=np.complex128)
    r_tilde = np.asarray(r_tilde, dtype=np.complex128)
    nt = hhat.shape[1]
    if q.shape != (nt, nt) or r_tilde.shape != (nt, nt):
        raise DomainError(f"Q{q.shape} and R_tilde{r_tilde.shape} must be {nt}x{nt}")
    denom = 1.0 + np.real(np.trace(r_tilde @ q))
    m = np.eye(nt) + hhat.conj().T @ hhat @ q / denom
    sign, logdet = np.linalg.slogdet(m)
    return float(np.real(logdet) / np.log(2))


def _logdet_diag(h0, d):
    """``log2 det(I + diag(d)^{1/2} H0^H H0 diag(d)^{1/2})`` per trial."""
    keep = np.flatnonzero(d > 0)
    if keep.size == 0:
        return np.zeros(h0.shape[0])
    hk = h0[:, :, keep] * np.sqrt(d[keep])
    m = np.conj(np.swapaxes(hk, 1, 2)) @ hk
    m += np.eye(keep.size)
    _, logdet = np.linalg.slogdet(m)
    return np.real(logdet) / np.log(2)


class Segment(NamedTuple):
    weight: float  # fraction of the block
    clb: np.ndarray  # (T,) bits per channel use
    noise_weights: np.ndarray  # (T, nt) or (nt,)


def _diag_segment(h0, weight, hat_eig, tilde_eig, q):
    w = tilde_eig * q
    denom = 1.0 + np.sum(w)
    return Segment(weight, _logdet_diag(h0, hat_eig * q / denom), w)


def _iid_stats(cfg):
    est = estimation_stats(identity_covariance(cfg.nt), iid_orthogonal_pilots(cfg.nt, cfg.pp, cfg.lp))
    return est.hat_eig, est.tilde_eig


def effective_snr(cfg):
    """``sigma_hat^2 Pd / (1 + sigma_tilde^2 Pd)`` for i.i.d. orthogonal training."""
    hat, tilde = _iid_stats(cfg)
    return float(hat[0] * cfg.pd / (1.0 + tilde[0] * cfg.pd))


def _waterfilled_segment(lam, weight, sig_hat, sig_tilde, budget):
    gains = sig_hat * lam / (1.0 + sig_tilde * budget)
    q, _, _ = waterfill_batch(gains, budget)
    clb = np.sum(np.log2(1.0 + gains * q), axis=1)
    return Segment(weight, clb, sig_tilde * q)


def _split_fractions(split, m):
    f = np.asarray(split, dtype=float)
    if f.size != m or np.any(f < 0) or abs(f.sum() - 1) > 1e-9:
        raise ConfigError(f"data split must be {m} nonnegative fractions summing to 1, got {split}", field="split")
    return f


def _segments(cfg, sim):
    s = cfg.scheme
    nt = cfg.nt
    h0, _ = trial_pool(sim, cfg.nr, nt)
    if isinstance(s, NonFeedback):
        est = estimation_stats(cfg.cov, iid_orthogonal_pilots(nt, cfg.pp, cfg.lp))
        q = np.full(nt, cfg.pd / nt)
        return [_diag_segment(h0, cfg.ld / cfg.L, est.hat_eig, est.tilde_eig, q)]
    if isinstance(s, Ccf):
        pilot = ccf_pilots(s.cov, cfg.pp, cfg.lp)
        est = estimation_stats(s.cov, pilot)
        q = np.zeros(nt)
        if s.split is None:
            q[: pilot.lp] = cfg.pd / pilot.lp
        else:
            q[: pilot.lp] = cfg.pd * _split_fractions(s.split, pilot.lp)
        return [_diag_segment(h0, cfg.ld / cfg.L, est.hat_eig, est.tilde_eig, q)]
    if isinstance(s, Beamforming):
        gmax = float(s.cov.eigvalues[0])
        pp, pd = cfg.pp, cfg.pd
        norm2 = np.sum(np.abs(h0[:, :, 0]) ** 2, axis=1)
        clb = np.log2(1.0 + norm2 * gmax * pp * pd / (1.0 / gmax + pp + pd))
        w = np.zeros(nt)
        w[0] = pd / (pp + 1.0 / gmax)
        return [Segment(cfg.ld / cfg.L, clb, w)]

    hat, tilde = _iid_stats(cfg)
    lam = wishart_eigs(sim, cfg.nr, nt)
    if isinstance(s, CgfDelayless):
        return [_waterfilled_segment(lam, cfg.ld / cfg.L, hat[0], tilde[0], cfg.pd)]
    if isinstance(s, CgfDelayed):
        segs = []
        if cfg.d > 0:
            segs.append(_diag_segment(h0, cfg.d / cfg.L, hat, tilde, np.full(nt, cfg.pd1 / nt)))
        if cfg.d < cfg.ld:
            segs.append(_waterfilled_segment(lam, (cfg.ld - cfg.d) / cfg.L, hat[0], tilde[0], cfg.pd2))
        return segs
    raise ConfigError(f"unknown scheme {s!r}", field="scheme")


def block_samples(cfg, sim):
    """Per-trial block-average lower bound (the summand of the estimate)."""
    segs = _segments(cfg, sim)
    total = np.zeros(sim.trials)
    for seg in segs:
        total = total + seg.weight * seg.clb
    return total


def evaluate(cfg, sim=SimSettings()):
    """Average capacity lower bound per block, ``(Ld/L) E{C_LB}``, in bits per channel use."""
    return CapacityEstimate.from_samples(block_samples(cfg, sim))


def gap_term(z2, w, nr):
    """Per-trial ``Nr E_x{log2((1 + sum w) / (1 + sum w |z|^2))}`` over input draws.

    ``z2`` holds ``|z|^2`` with shape ``(T, draws, nt)``, ``w`` the noise weights ``(T, nt)``.
    """
    tr = np.sum(w, axis=1)
    quad = np.einsum("tji,ti->tj", z2, w)
    return nr * np.mean(np.log2((1.0 + tr)[:, None] / (1.0 + quad)), axis=1)


def gap_estimate(cfg, sim=SimSettings()):
    """Lower bound, upper bound and relative gap ``(C_UB - C_LB) / C_LB``.

    The gap term ``Nr E_x{log2((1 + tr(R_tilde Q)) / (1 + x^H R_tilde x))}``
    uses ``GAP_INPUT_DRAWS`` Gaussian inputs per channel draw.
    """
    if sim.trials < MIN_GAP_TRIALS:
        raise InsufficientSamplingError(f"gap estimate needs at least {MIN_GAP_TRIALS} trials", field="trials")
    _, z = trial_pool(sim, cfg.nr, cfg.nt, GAP_INPUT_DRAWS)
    z2 = np.abs(z) ** 2  # (T, nx, nt)
    lower = np.zeros(sim.trials)
    gap = np.zeros(sim.trials)
    for seg in _segments(cfg, sim):
        g = gap_term(z2, np.broadcast_to(seg.noise_weights, (sim.trials, cfg.nt)), cfg.nr)
        lower = lower + seg.weight * seg.clb
        gap = gap + seg.weight * g
    clb = CapacityEstimate.from_samples(lower)
    cub = CapacityEstimate.from_samples(lower + gap)
    ratio = (cub.mean - clb.mean) / clb.mean if clb.mean > 0 else float("inf")
    return clb, cub, float(ratio)


def perfect_csi_delayed_clb(nt, nr, beta, phi, pd, sim=SimSettings()):
    """Delayed-feedback bound with perfect channel knowledge, per channel use.

    ``beta`` of the data symbols use equal power ``phi Pd / beta`` spread over
    the antennas; the rest water-fill the budget ``(1 - phi) Pd / (1 - beta)``.
    """
    if not 0 < beta < 1:
        raise DomainError("beta must lie strictly inside (0, 1); use the pure equal-power or water-filling bound")
    if not 0 <= phi <= 1:
        raise DomainError(f"phi must lie in [0, 1], got {phi}")
    lam = wishart_eigs(sim, nr, nt)
    fixed = beta * np.sum(np.log2(1.0 + lam * phi * pd / (beta * nt)), axis=1)
    q, _, _ = waterfill_batch(lam, (1 - phi) * pd / (1 - beta))
    adaptive = (1 - beta) * np.sum(np.log2(1.0 + lam * q), axis=1)
    return CapacityEstimate.from_samples(fixed + adaptive)
