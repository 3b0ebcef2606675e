import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from memix import medist as md
from memix.errors import DimensionError, DomainError, InvariantError, UnderflowError
from support import Spectral, convolve_direct, order_stat_direct, random_ph

seeds = st.integers(0, 2 ** 32 - 1)


def canonical_pdf(x):
    return 2.0 / 3.0 * np.exp(-x) * (1.0 + np.cos(x))


def test_exponential_cdf_and_canonical_values():
    assert md.exponential(1.0).cdf(math.log(2.0)) == pytest.approx(0.5, abs=1e-15)
    f = md.canonical_example()
    assert f.pdf(0.0) == pytest.approx(4.0 / 3.0, abs=1e-14)
    assert f.pdf(math.pi) == pytest.approx(0.0, abs=1e-14)
    assert float(f.alpha @ f.l) == pytest.approx(1.0, abs=1e-14)
    assert f.kappa == pytest.approx(-1.0)


def test_evaluate_is_consistent():
    f = md.canonical_example()
    xs = np.linspace(0, 8, 17)
    ev = md.evaluate(f, xs)
    assert_allclose(ev.cdf + ev.sf, 1.0, atol=1e-14)
    assert_allclose(ev.pdf, canonical_pdf(xs), atol=1e-13)
    scalar = md.evaluate(f, 1.0)
    assert isinstance(scalar.pdf, float)


def test_laplace_and_moments():
    assert md.laplace(md.exponential(1.0), 1.0) == pytest.approx(0.5)
    f = md.canonical_example()
    assert md.laplace(f, 0.0) == pytest.approx(1.0, abs=1e-14)
    ref = integrate.quad(lambda x: np.exp(-x) * canonical_pdf(x), 0, np.inf, epsabs=1e-13)[0]
    assert md.laplace(f, 1.0) == pytest.approx(ref, abs=1e-11)
    assert md.moment(md.exponential(1.0), 2) == pytest.approx(2.0)
    assert f.moment(0) == 1.0
    ref = integrate.quad(lambda x: x * canonical_pdf(x), 0, np.inf, epsabs=1e-13)[0]
    assert f.mean == pytest.approx(ref, abs=1e-11)
    with pytest.raises(DomainError):
        f.moment(-1)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(1, 4), st.integers(0, 4))
def test_moments_match_spectral_oracle(seed, p, r):
    f = random_ph(np.random.default_rng(seed), p)
    assert f.moment(r) == pytest.approx(Spectral(f).moment(r), rel=1e-9)


def test_invalid_triples_rejected():
    with pytest.raises(DimensionError):
        md.METriple([1.0, 0.0], [[-1.0]], [1.0])
    with pytest.raises(DomainError):
        md.METriple([1.0], [[1.0]], [1.0])  # unstable
    with pytest.raises(InvariantError):
        md.METriple([1.0], [[-1.0]], [2.0])  # mass 2
    with pytest.raises(InvariantError):
        # e^{-x}(1 + 2 cos x) normalised: goes negative
        md.METriple([1.0, 0.0, 0.0], [[-1.0, -1.0, 2.0], [1.0, -1.0, -2.0], [0.0, 0.0, -1.0]], [4.0, 2.0, 1.0])
    with pytest.raises(DomainError):
        md.exponential(1.0).pdf(-1.0)


def test_convolution():
    e1, e2 = md.exponential(1.0), md.exponential(2.0)
    xs = np.linspace(0, 6, 13)
    assert_allclose(md.convolve([e1]).pdf(xs), e1.pdf(xs), atol=1e-15)
    assert md.convolve([e1, e1]).pdf(1.0) == pytest.approx(math.exp(-1.0), abs=1e-14)
    xs = np.linspace(0.1, 10, 25)
    ref = convolve_direct([e1.pdf, e2.pdf], xs)
    assert_allclose(md.convolve([e1, e2]).pdf(xs), ref, atol=1e-12)
    # closed form 2(e^{-x} - e^{-2x})
    assert_allclose(md.convolve([e1, e2]).pdf(xs), 2 * (np.exp(-xs) - np.exp(-2 * xs)), atol=1e-14)


def test_mixtures():
    e1, e2 = md.exponential(1.0), md.exponential(2.0)
    one = md.MEAffineMixture([1.0], [e1])
    assert one.pdf(0.7) == pytest.approx(e1.pdf(0.7))
    assert md.MEAffineMixture([0.5, 0.5], [e1, e2]).pdf(0.0) == pytest.approx(1.5)
    aff = md.MEAffineMixture([2.0, -1.0], [e1, e2])
    assert aff.pdf(math.log(2.0)) == pytest.approx(0.5, abs=1e-14)
    tr = md.mixture_to_triple(aff)
    xs = np.linspace(0, 8, 9)
    assert_allclose(tr.pdf(xs), aff.pdf(xs), atol=1e-14)
    with pytest.raises(InvariantError):
        md.MEAffineMixture([-1.0, 2.0], [e1, e2])  # negative near zero
    with pytest.raises(InvariantError):
        md.MEAffineMixture([0.5, 0.6], [e1, e2])


def test_order_statistics_closed_forms():
    e = md.exponential(1.0)
    assert md.order_stat_indep([e], 1).mean == pytest.approx(1.0)
    mx = md.order_stat_indep([e, e], 2)
    xs = np.linspace(0, 5, 11)
    assert_allclose(mx.pdf(xs), 2 * np.exp(-xs) - 2 * np.exp(-2 * xs), atol=1e-14)
    assert mx.mean == pytest.approx(1.5)
    assert md.order_stat_indep([e] * 3, 3).mean == pytest.approx(11.0 / 6.0)
    with pytest.raises(DomainError):
        md.order_stat_indep([e, e], 3)


def test_order_statistics_identical_and_general_routes_agree():
    rng = np.random.default_rng(11)
    f, g, h = random_ph(rng, 2), random_ph(rng, 3), random_ph(rng, 1)
    xs = np.linspace(0.05, 6, 15)
    for k in (1, 2, 3):
        got = md.order_stat_indep([f, g, h], k).pdf(xs)
        ref = order_stat_direct([f.pdf, g.pdf, h.pdf], [f.cdf, g.cdf, h.cdf], k, xs)
        assert_allclose(got, ref, atol=1e-12)
        # identical inputs take the shortcut; compare with distinct copies
        copies = [md.METriple(f.alpha, f.T, f.t) for _ in range(3)]
        ref = order_stat_direct([f.pdf] * 3, [f.cdf] * 3, k, xs)
        assert_allclose(md.order_stat_indep(copies, k).pdf(xs), ref, atol=1e-12)
        assert_allclose(md.order_stat_indep([f] * 3, k).pdf(xs), ref, atol=1e-12)


def test_residual():
    f = md.canonical_example()
    assert md.residual(f, 0.0) is f
    e = md.exponential(1.7)
    xs = np.linspace(0, 4, 9)
    assert_allclose(md.residual(e, 2.5).pdf(xs), e.pdf(xs), rtol=1e-12)
    r = md.residual(f, 1.0)
    assert_allclose(r.pdf(xs), f.pdf(xs + 1.0) / f.sf(1.0), rtol=1e-11)
    with pytest.raises(UnderflowError):
        md.residual(md.exponential(1.0), 800.0)
    with pytest.raises(DomainError):
        md.residual(f, -1.0)


def test_equilibrium():
    e = md.exponential(2.0)
    xs = np.linspace(0, 4, 9)
    assert_allclose(md.equilibrium(e, 1).pdf(xs), e.pdf(xs), rtol=1e-12)
    assert md.equilibrium(md.erlang(2, 1.0), 1).pdf(0.0) == pytest.approx(0.5)
    f = md.canonical_example()
    # r=2: density proportional to the integrated survival function
    tail = lambda x: integrate.quad(f.sf, x, np.inf, epsabs=1e-13)[0]
    norm = integrate.quad(tail, 0, np.inf, epsabs=1e-12)[0]
    xs = np.linspace(0, 6, 7)
    ref = np.array([tail(x) for x in xs]) / norm
    assert_allclose(md.equilibrium(f, 2).pdf(xs), ref, atol=1e-9)
    _, prod = md.equilibrium_chain(f, 3)
    assert prod == pytest.approx(f.moment(3) / 6.0, rel=1e-12)
    with pytest.raises(DomainError):
        md.equilibrium(f, 0)


def test_esscher():
    f = md.canonical_example()
    res = md.esscher_size_biased(f, (0, 0.0))
    assert res.norm == 1.0 and res.triple is f
    e = md.exponential(1.0)
    xs = np.linspace(0, 5, 11)
    sb = md.esscher_size_biased(e, md.EsscherParams(1, 0.0))
    assert sb.norm == pytest.approx(1.0)
    assert_allclose(sb.triple.pdf(xs), xs * np.exp(-xs), atol=1e-14)
    tl = md.esscher_size_biased(e, (0, 1.0))
    assert tl.norm == pytest.approx(0.5)
    assert_allclose(tl.triple.pdf(xs), 2 * np.exp(-2 * xs), atol=1e-14)
    # general case against quadrature, including a negative tilt
    for n, lam in ((2, 0.4), (1, -0.5)):
        # tilt folded into one exponent so a negative lam cannot overflow
        w = lambda x: x ** n * 2.0 / 3.0 * np.exp(-(1.0 + lam) * x) * (1.0 + np.cos(x))
        C = integrate.quad(w, 0, np.inf, epsabs=1e-13)[0]
        got = md.esscher_size_biased(f, (n, lam))
        assert got.norm == pytest.approx(C, rel=1e-10)
        assert_allclose(got.triple.pdf(xs), w(xs) / C, atol=1e-11)
    with pytest.raises(DomainError):
        md.esscher_size_biased(f, (1, -1.0))
