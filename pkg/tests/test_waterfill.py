import numpy as np
import pytest
from hypothesis import given, strategies as st

from psamcap.errors import DomainError
from psamcap.waterfill import waterfill, waterfill_batch

gain_lists = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=6).map(lambda g: sorted(g, reverse=True))
budgets = st.floats(0, 1e3)


def objective(g, q):
    return np.sum(np.log1p(np.asarray(g) * q))


def test_examples():
    r = waterfill([1, 1], 2)
    np.testing.assert_allclose(r.alloc, [1, 1])
    assert (r.level, r.active) == (2, 2)
    r = waterfill([1, 0.1], 1)
    np.testing.assert_allclose(r.alloc, [1, 0])
    assert (r.level, r.active) == (2, 1)
    r = waterfill([2, 1], 3)
    np.testing.assert_allclose(r.alloc, [1.75, 1.25])
    assert r.level == pytest.approx(2.25) and r.active == 2


def test_zero_budget_convention():
    r = waterfill([4, 2, 1], 0)
    np.testing.assert_array_equal(r.alloc, 0)
    assert r.active == 0 and r.level == 0.25


@pytest.mark.parametrize(
    "gains, budget",
    [([], 1), ([1, 2], 1), ([1, 0], 1), ([1, -1], 1), ([1], -1), ([1], np.inf), ([[1]], 1)],
)
def test_rejects_bad_input(gains, budget):
    with pytest.raises(DomainError):
        waterfill(gains, budget)


@given(gain_lists, budgets)
def test_kkt_certificate(g, budget):
    r = waterfill(g, budget)
    inv = 1 / np.asarray(g)
    tol = 1e-9 * max(1.0, budget, inv.max())
    assert np.all(r.alloc >= 0)
    assert r.alloc.sum() == pytest.approx(budget, abs=tol)
    active = r.alloc > 0
    np.testing.assert_allclose(r.alloc[active] + inv[active], r.level, atol=tol)
    assert np.all(inv[~active] >= r.level - tol)
    assert active.sum() == r.active


@given(gain_lists, st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_active_count_nondecreasing_in_budget(g, b1, b2):
    lo, hi = sorted((b1, b2))
    assert waterfill(g, lo).active <= waterfill(g, hi).active


@pytest.mark.parametrize("seed", range(5))
def test_beats_random_simplex_points(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 5)
    g = np.sort(rng.uniform(0.05, 5, n))[::-1]
    budget = rng.uniform(0.1, 10)
    best = objective(g, waterfill(g, budget).alloc)
    pts = rng.dirichlet(np.ones(n), size=10**5) * budget
    rand = np.sum(np.log1p(pts * g), axis=1).max()
    assert best >= rand - 1e-9


def test_matches_convex_solver():
    from scipy.optimize import minimize

    g = np.array([3.0, 1.2, 0.4, 0.1])
    budget = 2.5
    res = minimize(
        lambda q: -objective(g, q),
        np.full(4, budget / 4),
        bounds=[(0, None)] * 4,
        constraints=[{"type": "eq", "fun": lambda q: q.sum() - budget}],
        method="SLSQP",
        options={"ftol": 1e-14},
    )
    np.testing.assert_allclose(waterfill(g, budget).alloc, res.x, atol=1e-5)


row4 = st.lists(st.floats(1e-3, 1e3), min_size=4, max_size=4).map(lambda g: sorted(g, reverse=True))


@given(st.lists(row4, min_size=1, max_size=5), st.lists(budgets, min_size=5, max_size=5))
def test_batch_matches_scalar(rows, bud):
    gains = np.array(rows)
    b = np.array(bud[: len(rows)])
    alloc, level, m = waterfill_batch(gains, b)
    for i, row in enumerate(rows):
        r = waterfill(row, b[i])
        np.testing.assert_allclose(alloc[i], r.alloc, atol=1e-9 * max(1, b[i]))
        assert level[i] == pytest.approx(r.level, rel=1e-12)
        assert m[i] == r.active


def test_batch_zero_gains_never_active():
    alloc, level, m = waterfill_batch(np.array([[2.0, 1.0, 0.0, 0.0]]), 100.0)
    assert m[0] == 2
    np.testing.assert_allclose(alloc[0, 2:], 0)
    assert alloc[0].sum() == pytest.approx(100.0)
