"""Optimizers for the pilot/data power split, the data power division under
feedback delay, and the training length.

Numerical searches evaluate the capacity with a fixed seed at every candidate
(common random numbers), which turns the Monte-Carlo objective into a
deterministic, continuous function of the searched parameter.
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .channelmodel import exp_correlation
from .capacity import (
    Beamforming,
    Ccf,
    CgfDelayed,
    CgfDelayless,
    NonFeedback,
    SchemeConfig,
    SimSettings,
    evaluate,
    wishart_eigs,
)
from .matrixcore import RandomStream
from .errors import ConfigError, DomainError, RegimeError
from .estimation import ccf_pilots
from .waterfill import waterfill_batch

LD_GT = "ld>lp"
EQUAL = "equal"
LD_LT = "ld<lp"

CCF_VALIDITY_WARN = 10.0
INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class AlphaRegime:
    """``gamma`` plus the branch of the closed form it belongs to."""

    gamma: float
    relation: str
    validity_ratio: Optional[float] = None  # CCF only: P L / sum(1/g_i)

    @property
    def valid(self):
        return self.validity_ratio is None or self.validity_ratio >= CCF_VALIDITY_WARN


def alpha_star(regime):
    g = regime.gamma
    if regime.relation == EQUAL:
        return 0.5
    if regime.relation == LD_GT:
        if not g > 1:
            raise RegimeError(f"gamma must exceed 1 when data outlasts training, got {g}")
        return g - math.sqrt(g * (g - 1))
    if regime.relation == LD_LT:
        if not g < 0:
            raise RegimeError(f"gamma must be negative when training outlasts data, got {g}")
        return g + math.sqrt(g * (g - 1))
    raise RegimeError(f"unknown regime {regime.relation!r}")


def _regime(gamma, ld, ref, **kw):
    if ld == ref:
        return AlphaRegime(float("nan"), EQUAL, **kw)
    return AlphaRegime(gamma, LD_GT if ld > ref else LD_LT, **kw)


def gamma_nonfeedback(nt, P, L, ld):
    """Regime for i.i.d. training with ``nt`` antennas (non-feedback and delayless CGF)."""
    if ld == nt:
        return _regime(None, ld, nt)
    pl = P * L
    return _regime((nt + pl) / (pl * (1 - nt / ld)), ld, nt)


def gamma_ccf(ld, lp, cov=None, P=None, L=None):
    """Regime for CCF training of ``lp`` eigen-channels.

    The closed form assumes ``P L`` dominates ``sum_{i<=lp} 1/g_i``; pass
    ``cov``, ``P`` and ``L`` to have that ratio computed and a warning raised
    when it falls below ``CCF_VALIDITY_WARN``.
    """
    ratio = None
    if cov is not None and P is not None and L is not None:
        ratio = float(P * L / np.sum(1.0 / cov.eigvalues[:lp]))
        if ratio < CCF_VALIDITY_WARN:
            warnings.warn(f"CCF closed form outside its validity range (P L / sum 1/g = {ratio:.2f})", stacklevel=2)
    if ld == lp:
        return _regime(None, ld, lp, validity_ratio=ratio)
    return _regime(ld / (ld - lp), ld, lp, validity_ratio=ratio)


def gamma_beamforming(gmax, P, L):
    if L < 3:
        raise DomainError(f"beamforming closed form needs L >= 3, got {L}")
    x = gmax * P * L
    return AlphaRegime((1 + x) / (x * (L - 2) / (L - 1)), LD_GT)


def closed_form_alpha(cfg):
    """Scheme-appropriate closed-form alpha for ``cfg``'s layout and power."""
    s = cfg.scheme
    if isinstance(s, (NonFeedback, CgfDelayless, CgfDelayed)):
        return alpha_star(gamma_nonfeedback(cfg.nt, cfg.P, cfg.L, cfg.ld))
    if isinstance(s, Ccf):
        return alpha_star(gamma_ccf(cfg.ld, cfg.lp))
    if isinstance(s, Beamforming):
        return alpha_star(gamma_beamforming(float(s.cov.eigvalues[0]), cfg.P, cfg.L))
    raise ConfigError(f"no closed form for scheme {s!r}", field="alpha")


def equal_power_alpha(L, lp):
    """The alpha that gives pilots and data the same power per transmission."""
    return (L - lp) / L


# --- data power division -------------------------------------------------------


class PhiSolution(NamedTuple):
    phi_star: float
    residual: float
    flagged: bool = False


def _stationarity(lam, beta, pd, phi):
    nt = lam.shape[1]
    fixed = np.sum(beta * lam / (beta * nt + phi * lam * pd), axis=1)
    _, nu, _ = waterfill_batch(lam, (1 - phi) * pd / (1 - beta))
    return float(np.mean(fixed - 1.0 / nu))


def phi_star_perfect_csi(nt, nr, beta, pd, sim=SimSettings(), tol=1e-10):
    """Optimal share of data energy for the non-adaptive sub-block, perfect CSI.

    Returns 0 when the mean eigenvalue does not exceed ``E{1/nu}`` at
    ``phi = 0``; otherwise bisects the stationarity condition
    ``E{beta sum(lam_i / (beta nt + phi lam_i Pd)) - 1/nu} = 0``.
    """
    if not 0 < beta < 1:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if pd <= 0:
        raise DomainError(f"data power must be positive, got {pd}")
    lam = wishart_eigs(sim, nr, nt)
    s0 = _stationarity(lam, beta, pd, 0.0)
    if s0 <= 0:
        return PhiSolution(0.0, s0)
    s1 = _stationarity(lam, beta, pd, 1.0)
    if s1 >= 0:
        return PhiSolution(1.0, s1, flagged=True)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _stationarity(lam, beta, pd, mid) > 0:
            lo = mid
        else:
            hi = mid
    phi = 0.5 * (lo + hi)
    return PhiSolution(phi, _stationarity(lam, beta, pd, phi))


class PhiScan(NamedTuple):
    phi: float
    capacity: float
    grid: np.ndarray
    values: np.ndarray


def numeric_phi(cfg, sim=SimSettings(), step=0.01):
    """Grid search of phi for a delayed-CGF config with imperfect estimation.

    The bound is not concave in phi when the estimation error is large, so a
    plain scan is used instead of a bracketing method.
    """
    if not isinstance(cfg.scheme, CgfDelayed) or not 0 < cfg.d < cfg.ld:
        raise ConfigError("phi search needs a delayed CGF config with 0 < delay < data length", field="delay")
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    values = np.array([evaluate(cfg.with_(scheme=CgfDelayed(cfg.d, float(f))), sim).mean for f in grid])
    k = int(np.argmax(values))
    return PhiScan(float(grid[k]), float(values[k]), grid, values)


# --- alpha search ----------------------------------------------------------------


class AlphaSearch(NamedTuple):
    alpha: float
    capacity: float
    flagged: bool = False  # golden section failed its sanity check; grid scan used


def golden_max(f, a, b, tol):
    """Golden-section search for the maximiser of a unimodal ``f`` on ``[a, b]``."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def numeric_alpha(cfg, sim=SimSettings(), tol=1e-3, lo=0.01, hi=0.99):
    """Alpha maximising the seeded capacity estimate of ``cfg``."""
    if tol < 1e-3:
        raise DomainError("tolerance below the Monte-Carlo noise floor (1e-3)")
    cache = {}

    def f(a):
        key = round(a, 12)
        if key not in cache:
            cache[key] = evaluate(cfg.with_(alpha=a), sim).mean
        return cache[key]

    best, val = golden_max(f, lo, hi, tol)
    probe = 0.05
    neighbours = [f(min(hi, best + probe)), f(max(lo, best - probe))]
    if val >= max(neighbours) - 1e-12:
        return AlphaSearch(best, val)
    grid = np.linspace(lo, hi, int(round((hi - lo) / 0.01)) + 1)
    k = int(np.argmax([f(a) for a in grid]))
    best, val = golden_max(f, grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)], tol)
    return AlphaSearch(best, val, flagged=True)


# --- training length -------------------------------------------------------------


class PilotLengthRow(NamedTuple):
    lp: int
    alpha: float
    estimate: object  # CapacityEstimate
    reduced: bool


def optimal_pilot_length(cov, nt, nr, L, P, sim=SimSettings()):
    """Best CCF training length among ``1..nt``, each at its closed-form alpha.

    Candidates whose pilot water-filling trains fewer channels than requested
    are the same design as a shorter training length, so they are listed in
    the table but never selected. Ties go to the shorter length.
    """
    table = []
    best_lp, best = None, -np.inf
    for lp in range(1, nt + 1):
        if lp >= L:
            break
        alpha = alpha_star(gamma_ccf(L - lp, lp))
        cfg = SchemeConfig(nt, nr, L, lp, P, alpha, Ccf(cov))
        reduced = ccf_pilots(cov, cfg.pp, lp).reduced
        est = evaluate(cfg, sim)
        table.append(PilotLengthRow(lp, alpha, est, reduced))
        if not reduced and est.mean > best:
            best_lp, best = lp, est.mean
    return best_lp, table


def scan_training_length(template, lps, sim=SimSettings()):
    """Capacity at the numerically optimal alpha for each training length."""
    rows = []
    for lp in lps:
        cfg = template.with_(lp=lp)
        search = numeric_alpha(cfg, sim)
        rows.append(PilotLengthRow(lp, search.alpha, evaluate(cfg.with_(alpha=search.alpha), sim), False))
    return rows


class SplitSearch(NamedTuple):
    split: tuple
    capacity: float
    equal_capacity: float

    @property
    def loss(self):
        """Relative capacity lost by using equal power instead of the best split."""
        return 1.0 - self.equal_capacity / self.capacity


def best_ccf_split(cfg, sim=SimSettings(), points=200, seed=None):
    """Random search over the data-power split of a two-channel CCF design."""
    if not isinstance(cfg.scheme, Ccf):
        raise ConfigError("split search needs a CCF config", field="scheme")
    m = ccf_pilots(cfg.scheme.cov, cfg.pp, cfg.lp).lp
    if m != 2:
        raise ConfigError(f"split search covers two trained channels, design trains {m}", field="pilot_len")
    equal = evaluate(cfg.with_(scheme=Ccf(cfg.scheme.cov)), sim).mean
    gen = RandomStream(sim.seed if seed is None else seed).substream(0).generator()
    best_split, best = (0.5, 0.5), equal
    for f in gen.random(points):
        split = (float(f), float(1 - f))
        val = evaluate(cfg.with_(scheme=Ccf(cfg.scheme.cov, split)), sim).mean
        if val > best:
            best_split, best = split, val
    return SplitSearch(best_split, best, equal)


def critical_rho(nt, nr, L, P, lp_long, lp_short, sim=SimSettings(), tol=1e-4, hi=0.999):
    """Exponential-model correlation where ``lp_short`` overtakes ``lp_long``.

    Each length uses its closed-form CCF alpha; the crossing is bracketed on
    ``[0, hi]`` and bisected with common random numbers.
    """

    def advantage(rho):
        cov = exp_correlation(nt, rho)
        vals = []
        for lp in (lp_long, lp_short):
            cfg = SchemeConfig(nt, nr, L, lp, P, alpha_star(gamma_ccf(L - lp, lp)), Ccf(cov))
            vals.append(evaluate(cfg, sim).mean)
        return vals[0] - vals[1]

    lo = 0.0
    if advantage(lo) <= 0 or advantage(hi) >= 0:
        raise DomainError("no crossing between the two training lengths on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if advantage(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
