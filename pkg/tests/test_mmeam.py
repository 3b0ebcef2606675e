import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from memix import medist as md
from memix import mmeam as mm
from memix.errors import DegenerateModelError, DimensionError, DomainError, InvariantError
from support import (
    bivariate_grid,
    joint_density_direct,
    joint_survival_direct,
    model_terms,
    order_stat_direct,
    panel_rule,
    random_model,
    tail_bound,
)

seeds = st.integers(0, 2 ** 32 - 1)


@pytest.fixture(scope="module")
def biv():
    m = random_model(np.random.default_rng(7), 2, 2, 2, fill=1.0)
    x, w = panel_rule(tail_bound(m))
    return m, x, w


def _indep_exp(M=2):
    return mm.independence_model([md.exponential(1.0)] * M)


def test_density_basics():
    assert mm.joint_density(_indep_exp(), [0.0, 0.0]) == pytest.approx(1.0)
    e1, e2 = md.exponential(1.0), md.exponential(2.5)
    a, b = np.array([0.3, 0.7]), np.array([0.6, 0.4])
    m = mm.MMEamModel.from_dense([[e1, e2], [e2, e1]], np.outer(a, b))
    f1 = md.MEAffineMixture(a, [e1, e2])
    f2 = md.MEAffineMixture(b, [e2, e1])
    pts = np.array([[0.1, 0.4], [1.3, 0.2], [2.0, 3.0]])
    assert_allclose(mm.joint_density(m, pts), f1.pdf(pts[:, 0]) * f2.pdf(pts[:, 1]), rtol=1e-13)
    rm = random_model(np.random.default_rng(3), 3, 2, 3)
    pts = np.random.default_rng(4).uniform(0, 3, (20, 3))
    assert_allclose(mm.joint_density(rm, pts), joint_density_direct(rm, pts), rtol=1e-10)
    assert_allclose(mm.joint_survival(rm, pts), joint_survival_direct(rm, pts), rtol=1e-10)


def test_construction_errors():
    e = md.exponential(1.0)
    with pytest.raises(DimensionError):
        mm.MMEamModel([e], [[0, 1]], [1.0])  # index out of range
    with pytest.raises(InvariantError):
        mm.MMEamModel([e], [[0, 0]], [0.5])
    with pytest.raises(DimensionError):
        mm.MMEamModel([[e], [e]], [[0, 0]], [1.0], labels=["a"])
    with pytest.raises(DimensionError):
        mm.joint_density(_indep_exp(), [1.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        mm.joint_density(_indep_exp(), [-1.0, 1.0])


def test_signed_weights_checked_on_grid():
    e1, e2 = md.exponential(1.0), md.exponential(2.0)
    ok = mm.MMEamModel([e1, e2], [[0, 0], [1, 0]], [2.0, -1.0])
    assert not ok.nonnegative
    assert ok.density([math.log(2.0), 0.0]) == pytest.approx(0.5)
    with pytest.raises(InvariantError):
        mm.MMEamModel([e1, e2], [[0, 0], [1, 0]], [-1.0, 2.0])


def test_survival(biv):
    assert mm.joint_survival(_indep_exp(), [0.0, 0.0]) == pytest.approx(1.0)
    assert mm.joint_survival(_indep_exp(), [1.0, 1.0]) == pytest.approx(math.exp(-2.0))
    m, _, _ = biv
    for z in ((0.5, 1.2), (2.0, 0.3)):
        # quadrant [z, inf)^2 integrated with a shifted rule
        x1, w1 = panel_rule(tail_bound(m) - z[0])
        x2, w2 = panel_rule(tail_bound(m) - z[1])
        G = np.zeros((x1.size, x2.size))
        for p, (s1, s2) in model_terms(m):
            G += p * np.outer(s1.pdf(x1 + z[0]), s2.pdf(x2 + z[1]))
        assert mm.joint_survival(m, z) == pytest.approx(w1 @ G @ w2, abs=1e-12)


def test_marginalize():
    rm = random_model(np.random.default_rng(5), 3, 2, 2, fill=0.8)
    same = mm.marginalize(rm, [0, 1, 2])
    pts = np.random.default_rng(6).uniform(0, 3, (5, 3))
    assert_allclose(same.density(pts), rm.density(pts), rtol=1e-14)
    sub = mm.marginalize(rm, [0, 2])
    assert sub.M == 2 and sub.labels == (0, 2)
    u, wu = panel_rule(tail_bound(rm))
    for a, c in ((0.3, 0.8), (1.5, 0.1)):
        pts = np.column_stack([np.full(u.size, a), u, np.full(u.size, c)])
        ref = wu @ joint_density_direct(rm, pts)
        assert sub.density([a, c]) == pytest.approx(ref, abs=1e-12)
    e1, e2 = md.exponential(1.0), md.exponential(3.0)
    a, b = np.array([0.25, 0.75]), np.array([0.5, 0.5])
    m = mm.MMEamModel.from_dense([e1, e2], np.outer(a, b))
    assert_allclose(m.marginal_weights(0), a)
    assert_allclose(mm.marginal(m, 1).pdf(np.array([0.0, 1.0])), b @ [[1.0, math.exp(-1.0)], [3.0, 3 * math.exp(-3.0)]])


def test_condition_on(biv):
    m, x, w = biv
    assert mm.condition_on(m, {}) is m
    e1, e2 = md.exponential(1.0), md.exponential(2.0)
    ind = mm.MMEamModel.from_dense([e1, e2], np.outer([0.4, 0.6], [0.1, 0.9]))
    c = mm.condition_on(ind, {1: 0.7})
    xs = np.linspace(0, 4, 9)
    assert_allclose(c.density(xs[:, None]), mm.marginal(ind, 0).pdf(xs), rtol=1e-12)
    c = mm.condition_on(m, {1: 1.0})
    pts = lambda v: np.column_stack([v, np.full(np.size(v), 1.0)])
    norm = w @ joint_density_direct(m, pts(x))
    assert_allclose(c.density(xs[:, None]), joint_density_direct(m, pts(xs)) / norm, rtol=1e-10)
    with pytest.raises(DomainError):
        mm.condition_on(m, {0: 1.0, 1: 1.0})
    # Erlang(3) density vanishes at zero
    deg = mm.independence_model([md.erlang(3, 1.0), e1])
    with pytest.raises(DegenerateModelError):
        mm.condition_on(deg, {0: 0.0})


def test_cross_moments(biv):
    m, x, w = biv
    assert mm.cross_moment(m, [0, 0]) == pytest.approx(1.0, abs=1e-15)
    assert mm.cross_moment(_indep_exp(), [1, 1]) == pytest.approx(1.0)
    D = bivariate_grid(m, "pdf", x)
    for r in ((2, 1), (1, 1), (0, 3)):
        ref = (w * x ** r[0]) @ D @ (w * x ** r[1])
        assert mm.cross_moment(m, r) == pytest.approx(ref, rel=1e-10)


def test_residual_lifetime(biv):
    m, x, w = biv
    assert mm.residual_lifetime(m, [0.0, 0.0]) is m
    ind = _indep_exp()
    r = mm.residual_lifetime(ind, [0.7, 2.0])
    pts = np.random.default_rng(1).uniform(0, 3, (6, 2))
    assert_allclose(r.density(pts), ind.density(pts), rtol=1e-12)
    z = np.array([0.5, 1.2])
    r = mm.residual_lifetime(m, z)
    assert_allclose(r.density(pts), joint_density_direct(m, pts + z) / joint_survival_direct(m, z), rtol=1e-10)


def test_esscher(biv):
    m, x, w = biv
    same, C = mm.esscher(m, [0, 0], [0.0, 0.0])
    assert same is m and C == 1.0
    e1, e3 = md.exponential(1.0), md.exponential(3.0)
    ind = mm.MMEamModel.from_dense([e1, e3], np.outer([0.4, 0.6], [0.2, 0.8]))
    _, C = mm.esscher(ind, [1, 0], [0.0, 0.0])
    assert C == pytest.approx(mm.marginal(ind, 0).mean)
    D = bivariate_grid(m, "pdf", x)
    for n, lam in (((1, 1), (0.3, 0.0)), ((0, 2), (-0.2, 0.5))):
        wx = w * x ** n[0] * np.exp(-lam[0] * x)
        wy = w * x ** n[1] * np.exp(-lam[1] * x)
        tm, C = mm.esscher(m, n, lam)
        assert C == pytest.approx(wx @ D @ wy, rel=1e-10)
        pts = np.array([[0.3, 0.9], [1.7, 0.4]])
        ref = joint_density_direct(m, pts) * pts[:, 0] ** n[0] * pts[:, 1] ** n[1] * np.exp(-pts @ lam) / C
        assert_allclose(tm.density(pts), ref, rtol=1e-10)
    with pytest.raises(DomainError):
        mm.esscher(m, [0, 0], [-50.0, 0.0])


def test_equilibrium(biv):
    m, x, w = biv
    ind = mm.independence_model([md.exponential(1.5), md.exponential(0.5)])
    pts = np.array([[0.2, 0.4], [1.0, 3.0]])
    assert_allclose(mm.equilibrium(ind, 1).density(pts), ind.density(pts), rtol=1e-12)
    S = bivariate_grid(m, "sf", x)
    norm = w @ S @ w
    eq = mm.equilibrium(m, 1)
    assert_allclose(eq.density(pts), joint_survival_direct(m, pts) / norm, rtol=1e-9)
    assert eq.density([[0.0, 0.0]])[0] == pytest.approx(1.0 / norm, rel=1e-9)


def test_order_statistics():
    f = md.canonical_example()
    one = mm.independence_model([f])
    xs = np.linspace(0, 5, 11)
    assert_allclose(mm.order_statistic(one, 1).pdf(xs), f.pdf(xs), atol=1e-14)
    assert mm.order_statistic(_indep_exp(3), 3).mean == pytest.approx(11.0 / 6.0)
    rm = random_model(np.random.default_rng(9), 3, 2, 2)
    xs = np.linspace(0.05, 5, 12)
    for j in (1, 2, 3):
        ref = np.zeros_like(xs)
        for p, sp in model_terms(rm):
            ref += p * order_stat_direct([s.pdf for s in sp], [s.cdf for s in sp], j, xs)
        assert_allclose(mm.order_statistic(rm, j).pdf(xs), ref, atol=1e-11)
    with pytest.raises(DomainError):
        mm.order_statistic(rm, 4)


def test_rank_correlations(biv):
    e1, e2 = md.exponential(1.0), md.exponential(2.0)
    ind = mm.MMEamModel.from_dense([e1, e2], np.outer([0.3, 0.7], [0.5, 0.5]))
    for kind in ("kendall", "spearman", "pearson"):
        assert abs(mm.rank_corr(ind, 0, 1, kind)) < 1e-10
    assert mm.c_value(e1, e1) == pytest.approx(0.5)
    assert mm.c_value(e1, e2) == pytest.approx(1.0 / 3.0)  # P(X1 < X2) with rates 1, 2
    m, x, w = biv
    D = bivariate_grid(m, "pdf", x)
    S = bivariate_grid(m, "sf", x)
    S1 = mm.marginal(m, 0).sf(x)
    S2 = mm.marginal(m, 1).sf(x)
    F = 1.0 - S1[:, None] - S2[None, :] + S
    tau = 4.0 * (w @ (F * D) @ w) - 1.0
    rho = 12.0 * ((w * (1 - S1)) @ D @ (w * (1 - S2))) - 3.0
    assert mm.rank_corr(m, 0, 1, "kendall") == pytest.approx(tau, abs=1e-10)
    assert mm.rank_corr(m, 0, 1, "spearman") == pytest.approx(rho, abs=1e-10)
    mx = (w * x) @ D @ w
    my = w @ D @ (w * x)
    vx = (w * x * x) @ D @ w - mx ** 2
    vy = w @ D @ (w * x * x) - my ** 2
    pear = ((w * x) @ D @ (w * x) - mx * my) / math.sqrt(vx * vy)
    assert mm.rank_corr(m, 0, 1, "pearson") == pytest.approx(pear, abs=1e-10)
    assert mm.rank_corr(m, 1, 1) == 1.0
    with pytest.raises(DomainError):
        mm.rank_corr(m, 0, 1, "blomqvist")


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_model_invariants(seed, M, L):
    rng = np.random.default_rng(seed)
    m = random_model(rng, M, L, 2)
    zero = np.zeros(M)
    assert m.survival(zero) == pytest.approx(1.0, abs=1e-12)
    for j in range(M):
        assert m.marginal_weights(j).sum() == pytest.approx(1.0, abs=1e-12)
        # marginal mean equals the cross moment with a unit exponent
        r = np.zeros(M, dtype=int)
        r[j] = 1
        assert mm.marginal(m, j).mean == pytest.approx(mm.cross_moment(m, r), rel=1e-10)
    pts = rng.uniform(0, 4, (10, M))
    assert np.all(m.density(pts) >= 0)
    S = m.survival(pts)
    assert np.all((S >= -1e-14) & (S <= 1 + 1e-14))
    # survival is monotone in each coordinate
    assert np.all(m.survival(pts + 0.5) <= S + 1e-14)
    z = rng.uniform(0, 1, M)
    r = mm.residual_lifetime(m, z)
    assert r.p.sum() == pytest.approx(1.0, abs=1e-12)
