import numpy as np
import pytest

from psamcap.allocopt import alpha_star, gamma_ccf, gamma_nonfeedback
from psamcap.capacity import (
    Beamforming,
    Ccf,
    CgfDelayed,
    CgfDelayless,
    NonFeedback,
    SchemeConfig,
    SimSettings,
    evaluate,
    gap_estimate,
    gap_term,
    instant_clb,
    perfect_csi_delayed_clb,
    wishart_eigs,
)
from psamcap.channelmodel import exp_correlation
from psamcap.errors import ConfigError, DomainError, InsufficientSamplingError
from psamcap.estimation import ccf_pilots, estimation_stats, lmmse_estimate, pilot_matrix
from psamcap.matrixcore import RandomStream, sample_zmcscg

SIM = SimSettings(trials=2000, seed=11)


def cgf_4x4(P=10.0, L=100, lp=4, scheme=None):
    alpha = alpha_star(gamma_nonfeedback(4, P, L, L - lp))
    return SchemeConfig(4, 4, L, lp, P, alpha, scheme or CgfDelayless())


# --- instantaneous bound ------------------------------------------------------------


def test_instant_clb_examples():
    assert instant_clb(np.eye(2), np.zeros((2, 2)), 0.1 * np.eye(2)) == 0.0
    assert instant_clb([[1.0]], [[3.0]], [[0.0]]) == pytest.approx(2.0)
    assert instant_clb(np.eye(2), 2 * np.eye(2), 0.1 * np.eye(2)) == pytest.approx(2 * np.log2(1 + 2 / 1.4), abs=1e-12)
    # 2 log2(1 + 2/1.4) = 2.5602
    assert instant_clb(np.eye(2), 2 * np.eye(2), 0.1 * np.eye(2)) == pytest.approx(2.5602, abs=1e-4)


def test_instant_clb_shape_check():
    with pytest.raises(DomainError):
        instant_clb(np.eye(2), np.eye(3), np.eye(2))


# --- configuration -----------------------------------------------------------------


def test_power_bookkeeping():
    cfg = SchemeConfig(4, 4, 20, 2, 10.0, 0.75, Ccf(exp_correlation(4, 0.5)))
    assert cfg.pp * cfg.lp + cfg.pd * cfg.ld == pytest.approx(cfg.P * cfg.L)
    assert cfg.pd == pytest.approx(0.75 * 200 / 18)


def test_delayed_power_split():
    cfg = cgf_4x4(scheme=CgfDelayed(20, 0.3))
    b = 20 / 96
    assert cfg.beta == pytest.approx(b)
    assert cfg.pd1 == pytest.approx(0.3 / b * cfg.pd)
    assert cfg.pd2 == pytest.approx(0.7 / (1 - b) * cfg.pd)
    assert b * cfg.pd1 + (1 - b) * cfg.pd2 == pytest.approx(cfg.pd)


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(alpha=1.0), "alpha"),
        (dict(alpha=0.0), "alpha"),
        (dict(lp=2), "pilot_len"),
        (dict(lp=100), "pilot_len"),
        (dict(scheme=CgfDelayed(97, 1.0)), "delay"),
        (dict(scheme=CgfDelayed(0, 0.2)), "phi"),
        (dict(scheme=CgfDelayed(96, 0.5)), "phi"),
        (dict(scheme=CgfDelayed(20, 1.5)), "phi"),
        (dict(scheme=Ccf(exp_correlation(3, 0.5))), "rho"),
        (dict(scheme=Beamforming(exp_correlation(4, 0.5))), "pilot_len"),
    ],
)
def test_invalid_configs(kwargs, field):
    with pytest.raises(ConfigError) as info:
        cgf_4x4().with_(**kwargs)
    assert info.value.field == field


def test_ccf_training_cannot_exceed_nt():
    with pytest.raises(ConfigError):
        SchemeConfig(2, 2, 20, 3, 10.0, 0.7, Ccf(exp_correlation(2, 0.5)))


def test_needs_two_trials():
    with pytest.raises(InsufficientSamplingError):
        evaluate(cgf_4x4(), SimSettings(trials=1))


# --- scheme identities ---------------------------------------------------------------


def test_ccf_at_zero_correlation_is_nonfeedback():
    cfg = SchemeConfig(4, 4, 20, 4, 10.0, 0.7, NonFeedback())
    nf = evaluate(cfg, SIM)
    ccf = evaluate(cfg.with_(scheme=Ccf(exp_correlation(4, 0.0))), SIM)
    assert ccf == nf


def test_delay_boundaries():
    base = cgf_4x4()
    assert evaluate(base.with_(scheme=CgfDelayed(0, 0.0)), SIM) == evaluate(base, SIM)
    full = evaluate(base.with_(scheme=CgfDelayed(base.ld, 1.0)), SIM)
    assert full == evaluate(base.with_(scheme=NonFeedback()), SIM)


def test_beamforming_equals_single_pilot_ccf():
    for rho in (0.3, 0.9):
        cov = exp_correlation(4, rho)
        cfg = SchemeConfig(4, 4, 20, 1, 10.0, 0.8, Beamforming(cov))
        bf = evaluate(cfg, SIM)
        ccf = evaluate(cfg.with_(scheme=Ccf(cov)), SIM)
        assert bf.mean == pytest.approx(ccf.mean, abs=1e-12)
        assert bf.stderr == pytest.approx(ccf.stderr, abs=1e-12)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_waterfilling_dominates_equal_power(seed):
    sim = SimSettings(1000, seed)
    for P in (1.0, 10.0, 100.0):
        cfg = cgf_4x4(P=P)
        assert evaluate(cfg, sim).mean >= evaluate(cfg.with_(scheme=NonFeedback()), sim).mean


def test_more_delay_never_helps():
    base = cgf_4x4()
    vals = [evaluate(base.with_(scheme=CgfDelayed(d, d / base.ld)), SIM).mean for d in (0, 20, base.ld)]
    assert vals[0] >= vals[1] >= vals[2]


@pytest.mark.parametrize(
    "scheme",
    [NonFeedback(), CgfDelayless(), CgfDelayed(20, 0.25), Ccf(exp_correlation(4, 0.5)), Beamforming(exp_correlation(4, 0.5))],
)
def test_snr_monotone(scheme):
    lp = 1 if isinstance(scheme, Beamforming) else (2 if isinstance(scheme, Ccf) else 4)
    vals = [evaluate(SchemeConfig(4, 4, 100, lp, P, 0.8, scheme), SIM).mean for P in (0.5, 1.0, 5.0, 20.0)]
    assert np.all(np.diff(vals) > 0)


def test_workers_do_not_change_results():
    cfg = cgf_4x4(scheme=CgfDelayed(20, 0.2))
    one = evaluate(cfg, SimSettings(600, 5, workers=1))
    three = evaluate(cfg, SimSettings(600, 5, workers=3))
    assert one == three


def test_ccf_reference_values():
    cov = exp_correlation(4, 0.5)
    sim = SimSettings()
    for lp, target in ((2, 7.0), (4, 6.3)):
        cfg = SchemeConfig(4, 4, 20, lp, 10.0, alpha_star(gamma_ccf(20 - lp, lp)), Ccf(cov))
        assert evaluate(cfg, sim).mean == pytest.approx(target, abs=0.3)


def test_statistical_sampling_matches_explicit_pilots():
    """Simulate pilots, noise and the LMMSE estimator explicitly and compare."""
    cov = exp_correlation(2, 0.5)
    cfg = SchemeConfig(2, 2, 20, 2, 10.0, 0.7, Ccf(cov))
    pilot = ccf_pilots(cov, cfg.pp, cfg.lp)
    est = estimation_stats(cov, pilot)
    xp = pilot_matrix(pilot)
    u = cov.eigbasis
    q = (u * np.array([cfg.pd / 2, cfg.pd / 2])) @ u.conj().T
    base = RandomStream(77)
    vals = []
    for t in range(4000):
        s = base.substream(t)
        h = sample_zmcscg(2, 2, s.substream(0)) @ cov.sqrt
        y = h @ xp + sample_zmcscg(2, cfg.lp, s.substream(1))
        vals.append(instant_clb(lmmse_estimate(y, xp, cov), q, est.r_tilde))
    vals = np.array(vals) * cfg.ld / cfg.L
    ref = evaluate(cfg, SimSettings(4000, 3))
    se = np.hypot(vals.std(ddof=1) / np.sqrt(vals.size), ref.stderr)
    assert abs(vals.mean() - ref.mean) < 3 * se


# --- gap -----------------------------------------------------------------------------


def test_gap_term_zero_without_estimation_error():
    z2 = np.abs(sample_zmcscg(10, 32 * 3, RandomStream(1))).reshape(10, 32, 3) ** 2
    np.testing.assert_array_equal(gap_term(z2, np.zeros((10, 3)), 4), 0.0)


@pytest.mark.parametrize(
    "cfg",
    [
        cgf_4x4(scheme=NonFeedback()),
        cgf_4x4(),
        cgf_4x4(scheme=CgfDelayed(20, 20 / 96)),
        SchemeConfig(4, 4, 20, 2, 10.0, 0.75, Ccf(exp_correlation(4, 0.5))),
        SchemeConfig(4, 4, 20, 1, 1.0, 0.8, Beamforming(exp_correlation(4, 0.9))),
        cgf_4x4(P=0.1),
    ],
)
def test_gap_nonnegative(cfg):
    clb, cub, ratio = gap_estimate(cfg, SimSettings(500, 2))
    assert cub.mean >= clb.mean
    assert ratio >= 0


def test_gap_needs_trials():
    with pytest.raises(InsufficientSamplingError):
        gap_estimate(cgf_4x4(), SimSettings(50))


# --- perfect-CSI delayed bound ---------------------------------------------------------


def test_scalar_closed_form():
    sim = SimSettings(3000, 4)
    beta, pd = 0.3, 5.0
    a = perfect_csi_delayed_clb(1, 1, beta, beta, pd, sim)
    g = wishart_eigs(sim, 1, 1)[:, 0]
    assert a.mean == pytest.approx(np.mean(np.log2(1 + g * pd)), abs=1e-12)
    phi = 0.6
    b = perfect_csi_delayed_clb(1, 1, beta, phi, pd, sim)
    ref = beta * np.log2(1 + g * phi * pd / beta) + (1 - beta) * np.log2(1 + g * (1 - phi) * pd / (1 - beta))
    assert b.mean == pytest.approx(ref.mean(), abs=1e-12)


def test_phi_one_keeps_only_fixed_part():
    sim = SimSettings(2000, 4)
    lam = wishart_eigs(sim, 2, 2)
    beta, pd = 0.2, 10.0
    ref = beta * np.sum(np.log2(1 + lam * pd / (beta * 2)), axis=1)
    assert perfect_csi_delayed_clb(2, 2, beta, 1.0, pd, sim).mean == pytest.approx(ref.mean(), abs=1e-12)


def _wishart_2x2_oracle(beta, phi, pd, top=45.0, n=1500):
    """Quadrature over the joint eigenvalue density of a 2x2 complex Wishart matrix.

    With Nt = Nr = 2 the unordered eigenvalues have density proportional to
    ``(l1 - l2)^2 exp(-l1 - l2)``.
    """
    x = (np.arange(n) + 0.5) * top / n
    l1, l2 = np.meshgrid(x, x, indexing="ij")
    dens = (l1 - l2) ** 2 * np.exp(-l1 - l2)
    hi, lo = np.maximum(l1, l2), np.minimum(l1, l2)
    fixed = beta * (np.log2(1 + hi * phi * pd / (2 * beta)) + np.log2(1 + lo * phi * pd / (2 * beta)))
    b = (1 - phi) * pd / (1 - beta)
    both = b > 1 / lo - 1 / hi
    level = (b + 1 / hi + 1 / lo) / 2
    wf = np.where(both, np.log2(np.maximum(hi * level, 1e-300)) + np.log2(np.maximum(lo * level, 1e-300)), np.log2(1 + hi * b))
    total = fixed + (1 - beta) * wf
    return float(np.sum(total * dens) / np.sum(dens))


def test_perfect_csi_matches_quadrature():
    oracle = _wishart_2x2_oracle(0.2, 0.2, 10.0)
    est = perfect_csi_delayed_clb(2, 2, 0.2, 0.2, 10.0, SimSettings(10_000, 42))
    assert abs(est.mean - oracle) < 2 * est.stderr


def test_perfect_csi_domain():
    with pytest.raises(DomainError):
        perfect_csi_delayed_clb(2, 2, 0.0, 0.1, 1.0)
    with pytest.raises(DomainError):
        perfect_csi_delayed_clb(2, 2, 0.2, 1.1, 1.0)
