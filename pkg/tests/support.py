"""Random model generators and brute-force reference computations for the tests.

The reference routines deliberately avoid the package's own matrix algebra:
densities come from an eigendecomposition of ``T`` and every closure
operation is evaluated from its defining integral or product formula.
"""
from __future__ import annotations

import itertools
from math import factorial

import numpy as np
from scipy import integrate

from memix.medist import METriple
from memix.mmeam import MMEamModel


def random_ph(rng, p: int, rate_lo=0.5, rate_hi=3.0) -> METriple:
    """Random phase-type triple of order ``p`` (probability alpha, sub-generator T)."""
    if p == 1:
        r = rng.uniform(rate_lo, rate_hi)
        return METriple([1.0], [[-r]], [r])
    off = rng.uniform(0.0, 1.0, (p, p)) * (rng.random((p, p)) < 0.7)
    np.fill_diagonal(off, 0.0)
    exit_ = rng.uniform(0.0, 1.0, p)
    exit_[rng.integers(p)] += rng.uniform(rate_lo, rate_hi)
    T = off - np.diag(off.sum(axis=1) + exit_)
    scale = rng.uniform(rate_lo, rate_hi) / max(1.0, np.abs(np.diag(T)).mean())
    T = T * scale
    alpha = rng.dirichlet(np.ones(p))
    return METriple(alpha, T, -T.sum(axis=1))


def random_model(rng, M: int, L: int, p_max: int, fill=0.6) -> MMEamModel:
    """Random nonnegative-weight MMEam with per-coordinate pools of size ``L``."""
    pools = [[random_ph(rng, int(rng.integers(1, p_max + 1))) for _ in range(L)] for _ in range(M)]
    cells = list(itertools.product(range(L), repeat=M))
    keep = [c for c in cells if rng.random() < fill] or [cells[int(rng.integers(len(cells)))]]
    p = rng.dirichlet(np.ones(len(keep)))
    return MMEamModel(pools, np.array(keep), p)


class Spectral:
    """Density, survival and moments of a triple through ``T = V diag(lam) V^-1``."""

    def __init__(self, f: METriple):
        lam, V = np.linalg.eig(np.asarray(f.T, dtype=float))
        Vi = np.linalg.inv(V)
        self.lam = lam
        a = np.asarray(f.alpha) @ V
        self.c_pdf = a * (Vi @ np.asarray(f.t))
        # l = (-T)^{-1} t  in the eigenbasis
        self.c_sf = a * ((Vi @ np.asarray(f.t)) / (-lam))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.real(np.exp(np.multiply.outer(x, self.lam)) @ self.c_pdf)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.real(np.exp(np.multiply.outer(x, self.lam)) @ self.c_sf)

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def moment(self, r: int) -> float:
        # E[X^r] = int x^r f(x) dx = sum_i c_i r! / (-lam_i)^{r+1}
        return float(np.real(np.sum(self.c_pdf * factorial(r) / (-self.lam) ** (r + 1))))


_GL_CACHE = {}


def gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def convolve_direct(pdfs, x, n=96):
    """Density of a sum of independent variables at the points ``x`` by nested
    Gauss-Legendre evaluation of the convolution integral."""
    t, w = gauss_legendre(n)
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def conv(fs, y):
        # y: array of evaluation points, any shape
        if len(fs) == 1:
            return fs[0](y)
        u = 0.5 * y[..., None] * (t + 1.0)
        inner = conv(fs[:-1], y[..., None] - u) * fs[-1](u)
        return 0.5 * y * np.sum(inner * w, axis=-1)

    return conv(list(pdfs), x)


def order_stat_direct(pdfs, cdfs, k, x):
    """Density of the k-th smallest of independent variables from the
    combinatorial definition: one variable at x, k-1 below, the rest above."""
    n = len(pdfs)
    x = np.asarray(x, dtype=float)
    F = [c(x) for c in cdfs]
    f = [d(x) for d in pdfs]
    out = np.zeros_like(x)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for below in itertools.combinations(others, k - 1):
            term = f[i].copy()
            for j in others:
                term = term * (F[j] if j in below else 1.0 - F[j])
            out += term
    return out


def tail_weighted(pdf, r, x, upper=np.inf):
    """``int_x^inf (u - x)^(r-1) / (r-1)! f(u) du`` by adaptive quadrature."""
    vals = []
    for xv in np.atleast_1d(x):
        v, _ = integrate.quad(lambda u: (u - xv) ** (r - 1) * pdf(u), xv, upper, epsabs=1e-13, epsrel=1e-12, limit=200)
        vals.append(v / factorial(r - 1))
    return np.array(vals)


def model_terms(m: MMEamModel):
    """(weight, [Spectral per coordinate]) for every nonzero weight."""
    cache = {}
    out = []
    for row, p in zip(m.index, m.p):
        sp = []
        for j, k in enumerate(row):
            f = m.pools[j][k]
            if id(f) not in cache:
                cache[id(f)] = Spectral(f)
            sp.append(cache[id(f)])
        out.append((float(p), sp))
    return out


def joint_density_direct(m, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tot = np.zeros(x.shape[0])
    for p, sp in model_terms(m):
        term = np.full(x.shape[0], p)
        for j, s in enumerate(sp):
            term *= s.pdf(x[:, j])
        tot += term
    return tot


def joint_survival_direct(m, z):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    tot = np.zeros(z.shape[0])
    for p, sp in model_terms(m):
        term = np.full(z.shape[0], p)
        for j, s in enumerate(sp):
            term *= s.sf(z[:, j])
        tot += term
    return tot


def panel_rule(upper, panels=60, n=20):
    """Composite Gauss-Legendre nodes and weights on ``[0, upper]``."""
    t, w = gauss_legendre(n)
    edges = np.linspace(0.0, upper, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * t).ravel()
    return x, (half[:, None] * w).ravel()


def tail_bound(m: MMEamModel, eps=1e-16) -> float:
    """Point beyond which every component density is negligible."""
    kappa = max(f.kappa for pool in m.pools for f in pool)
    return float(np.log(1.0 / eps) / -kappa) + 5.0


def bivariate_grid(m: MMEamModel, what="pdf", x=None):
    """Joint density (or survival) of a bivariate model on the tensor grid ``x``."""
    G = np.zeros((x.size, x.size))
    for p, (s1, s2) in model_terms(m):
        G += p * np.outer(getattr(s1, what)(x), getattr(s2, what)(x))
    return G


def random_stable(rng, n, margin=0.2):
    """Random real matrix whose spectrum lies in Re z <= -margin."""
    G = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(G).real) + margin + rng.uniform(0.0, 1.0)
    return G - shift * np.eye(n)


ACCEPTANCE_LOG: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
    ACCEPTANCE_LOG.append(line)
    print(line)
    return line
