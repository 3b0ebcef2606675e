"""Univariate matrix-exponential (ME) distributions and their closure constructions.

A triple ``(alpha, T, t)`` has density ``alpha e^{Tx} t`` and survival
function ``alpha e^{Tx} l`` with ``l = (-T)^{-1} t``. Real-weighted
mixtures of triples are handled by :class:`MEAffineMixture`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from math import comb, factorial
from typing import NamedTuple, Sequence

import numpy as np

from . import matcore as mc
from .errors import (
    DimensionError,
    DomainError,
    InvariantError,
    UnderflowError,
)

__all__ = [
    "METriple",
    "MEAffineMixture",
    "EsscherParams",
    "EsscherResult",
    "Evaluation",
    "exponential",
    "erlang",
    "canonical_example",
    "evaluate",
    "laplace",
    "moment",
    "convolve",
    "mixture_to_triple",
    "order_stat_indep",
    "residual",
    "equilibrium",
    "esscher_size_biased",
    "validation_grid",
]


class Evaluation(NamedTuple):
    pdf: np.ndarray | float
    cdf: np.ndarray | float
    sf: np.ndarray | float


def validation_grid(kappa, ctx=None, widen=1.0):
    """Log-spaced grid on ``[0, span/|kappa|]`` used for nonnegativity checks."""
    ctx = mc._ctx(ctx)
    x_max = widen * ctx.grid_span / abs(kappa)
    n = ctx.grid_points
    return np.concatenate([[0.0], np.geomspace(x_max * 1e-6, x_max, n - 1)])


def _as_x(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("evaluation point must be nonnegative")
    return arr


class METriple:
    """ME representation ``(alpha, T, t)``.

    Parameters
    ----------
    alpha : (p,) array_like
    T : (p, p) array_like
    t : (p,) array_like
    check : {"full", "norm", "none"}
        ``full`` verifies stability, normalisation and nonnegativity of the
        density on a validation grid; ``norm`` skips the grid; ``none``
        skips everything (internal use on constructions known to be valid).
    """

    __slots__ = ("_alpha", "_T", "_t", "_l", "_kappa")

    def __init__(self, alpha, T, t, *, check="full", ctx=None, widen=1.0):
        T = mc.as_matrix(T, "T", square=True)
        alpha = np.array(alpha, dtype=float).ravel()
        t = np.array(t, dtype=float).ravel()
        p = T.shape[0]
        if alpha.size != p or t.size != p:
            raise DimensionError(f"alpha ({alpha.size}), T ({p}x{p}) and t ({t.size}) disagree")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(t))):
            raise DomainError("non-finite alpha or t")
        alpha.setflags(write=False)
        t.setflags(write=False)
        self._alpha, self._T, self._t = alpha, T, t
        self._l = None
        self._kappa = None
        if check != "none":
            self._validate(check, mc._ctx(ctx), widen)

    def _validate(self, level, ctx, widen):
        if not self.kappa < ctx.kappa_max:
            raise DomainError(f"spectral abscissa {self.kappa:.3g} is not negative")
        mass = float(self._alpha @ self.l)
        if abs(mass - 1.0) > ctx.norm_tol:
            raise InvariantError(f"density integrates to {mass!r}, expected 1")
        if level == "full":
            xs = validation_grid(self.kappa, ctx, widen)
            f = self.pdf(xs)
            if f.min() < ctx.neg_tol * max(1.0, float(np.abs(f).max())):
                raise InvariantError(f"density is negative ({f.min():.3g}) on the validation grid")

    # basic attributes
    @property
    def alpha(self):
        return self._alpha

    @property
    def T(self):
        return self._T

    @property
    def t(self):
        return self._t

    @property
    def p(self) -> int:
        return self._T.shape[0]

    @property
    def l(self):
        if self._l is None:
            l = mc.neg_power_solve(self._T, self._t, 1)
            l.setflags(write=False)
            self._l = l
        return self._l

    @property
    def kappa(self) -> float:
        if self._kappa is None:
            self._kappa = mc.spectral_abscissa(self._T)
        return self._kappa

    def __repr__(self):
        return f"METriple(p={self.p}, kappa={self.kappa:.4g})"

    # evaluation
    def _row(self, x):
        """``alpha e^{T x}`` for every x (shape ``x.shape + (p,)``)."""
        xs = np.atleast_1d(x)
        E = mc.expm_grid(self._T, xs.ravel())
        rows = np.einsum("i,kij->kj", self._alpha, E)
        return rows.reshape(xs.shape + (self.p,))

    def pdf(self, x):
        x = _as_x(x)
        out = self._row(x) @ self._t
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def sf(self, x):
        x = _as_x(x)
        out = self._row(x) @ self.l
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def cdf(self, x):
        s = self.sf(x)
        return 1.0 - s

    def evaluate(self, x) -> Evaluation:
        x = _as_x(x)
        rows = self._row(x)
        pdf = rows @ self._t
        sf = rows @ self.l
        if x.ndim == 0:
            return Evaluation(float(pdf[0]), float(1.0 - sf[0]), float(sf[0]))
        return Evaluation(pdf.reshape(x.shape), (1.0 - sf).reshape(x.shape), sf.reshape(x.shape))

    def moment(self, r: int) -> float:
        r = int(r)
        if r < 0:
            raise DomainError("moment order must be nonnegative")
        if r == 0:
            return 1.0
        return factorial(r) * float(self._alpha @ mc.neg_power_solve(self._T, self._t, r + 1))

    @property
    def mean(self) -> float:
        return self.moment(1)

    def laplace(self, s) -> complex | float:
        return laplace(self, s)

    # uniform interface with MEAffineMixture
    @property
    def weights(self):
        return np.ones(1)

    @property
    def components(self):
        return (self,)

    def to_triple(self) -> "METriple":
        return self


@dataclass(frozen=True)
class EsscherParams:
    """Size-bias power ``n`` and exponential tilt ``lam``."""

    n: int = 0
    lam: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise DomainError("n must be a nonnegative integer")


class EsscherResult(NamedTuple):
    triple: METriple
    norm: float


class MEAffineMixture:
    """Real-weighted mixture ``sum_j c_j f_j`` of ME densities.

    Weights must sum to one; individual weights may be negative as long as
    the combined density stays nonnegative (checked on a grid when
    ``check="full"``).
    """

    __slots__ = ("_weights", "_components")

    def __init__(self, weights, components: Sequence[METriple], *, check="full", ctx=None):
        ctx = mc._ctx(ctx)
        w = np.array(weights, dtype=float).ravel()
        comps = tuple(components)
        if w.size != len(comps) or w.size == 0:
            raise DimensionError("need one weight per component and at least one component")
        if not np.all(np.isfinite(w)):
            raise DomainError("non-finite mixture weight")
        if abs(w.sum() - 1.0) > ctx.weight_tol * max(1.0, float(np.abs(w).sum())):
            raise InvariantError(f"mixture weights sum to {float(w.sum())!r}, expected 1")
        w.setflags(write=False)
        self._weights, self._components = w, comps
        if check == "full":
            xs = validation_grid(self.kappa, ctx)
            f = self.pdf(xs)
            if f.min() < ctx.neg_tol * max(1.0, float(np.abs(f).max())):
                raise InvariantError(f"mixture density is negative ({f.min():.3g}) on the validation grid")

    @property
    def weights(self):
        return self._weights

    @property
    def components(self):
        return self._components

    @property
    def kappa(self) -> float:
        return max(c.kappa for c in self._components)

    def __len__(self):
        return len(self._components)

    def __repr__(self):
        return f"MEAffineMixture(n={len(self)}, kappa={self.kappa:.4g})"

    def pdf(self, x):
        return sum(c * f.pdf(x) for c, f in zip(self._weights, self._components))

    def sf(self, x):
        return sum(c * f.sf(x) for c, f in zip(self._weights, self._components))

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def evaluate(self, x) -> Evaluation:
        parts = [f.evaluate(x) for f in self._components]
        pdf = sum(c * e.pdf for c, e in zip(self._weights, parts))
        sf = sum(c * e.sf for c, e in zip(self._weights, parts))
        return Evaluation(pdf, 1.0 - sf, sf)

    def moment(self, r: int) -> float:
        return float(sum(c * f.moment(r) for c, f in zip(self._weights, self._components)))

    @property
    def mean(self) -> float:
        return self.moment(1)

    def laplace(self, s):
        return sum(c * laplace(f, s) for c, f in zip(self._weights, self._components))

    def to_triple(self) -> METriple:
        return mixture_to_triple(self)


# ----------------------------------------------------------------- builders

def exponential(rate=1.0) -> METriple:
    return METriple([1.0], [[-float(rate)]], [float(rate)], check="norm")


def erlang(k: int, rate=1.0) -> METriple:
    """Erlang(k, rate) as a k-phase chain."""
    k = int(k)
    T = -rate * np.eye(k) + rate * np.eye(k, k=1)
    alpha = np.zeros(k)
    alpha[0] = 1.0
    t = np.zeros(k)
    t[-1] = rate
    return METriple(alpha, T, t, check="norm")


def canonical_example() -> METriple:
    """Non-phase-type triple with density ``(2/3) e^{-x} (1 + cos x)``."""
    return METriple(
        [1.0, 0.0, 0.0],
        [[-1.0, -1.0, 2.0 / 3.0], [1.0, -1.0, -2.0 / 3.0], [0.0, 0.0, -1.0]],
        [4.0 / 3.0, 2.0 / 3.0, 1.0],
    )


# ---------------------------------------------------------------- operations

def evaluate(tr, x) -> Evaluation:
    """Density, CDF and survival function at ``x`` (scalar or array)."""
    return tr.evaluate(x)


def laplace(tr: METriple, s):
    """``alpha (sI - T)^{-1} t`` for ``Re s > kappa``."""
    if np.real(s) <= tr.kappa:
        raise DomainError(f"Laplace argument {s} is not to the right of the spectral abscissa {tr.kappa:.4g}")
    M = s * np.eye(tr.p) - tr.T
    try:
        v = np.linalg.solve(M, tr.t.astype(np.result_type(M)))
    except np.linalg.LinAlgError as exc:
        raise DomainError("sI - T is singular") from exc
    val = tr.alpha @ v
    return complex(val) if np.iscomplexobj(val) else float(val)


def moment(tr, r: int) -> float:
    return tr.moment(r)


def convolve(triples: Sequence[METriple]) -> METriple:
    """Triple of the sum of independent ME variables (block bidiagonal form)."""
    triples = list(triples)
    if not triples:
        raise DomainError("convolve needs at least one triple")
    if len(triples) == 1:
        return triples[0]
    diag = [tr.T for tr in triples]
    upper = [np.outer(a.t, b.alpha) for a, b in zip(triples[:-1], triples[1:])]
    T = mc.block_bidiagonal(diag, upper)
    p = T.shape[0]
    alpha = np.zeros(p)
    alpha[: triples[0].p] = triples[0].alpha
    t = np.zeros(p)
    t[p - triples[-1].p:] = triples[-1].t
    return METriple(alpha, T, t, check="none")


def mixture_to_triple(mix: MEAffineMixture) -> METriple:
    """Single triple with block-diagonal ``T`` and initial vector ``(c_j alpha_j)``."""
    if isinstance(mix, METriple):
        return mix
    comps = mix.components
    if len(comps) == 1 and mix.weights[0] == 1.0:
        return comps[0]
    w = np.asarray(mix.weights)
    if abs(w.sum() - 1.0) > 1e-12 * max(1.0, float(np.abs(w).sum())):
        raise InvariantError("mixture weights do not sum to 1")
    sizes = [c.p for c in comps]
    p = sum(sizes)
    T = np.zeros((p, p))
    alpha = np.zeros(p)
    t = np.zeros(p)
    o = 0
    for c, f in zip(w, comps):
        T[o:o + f.p, o:o + f.p] = f.T
        alpha[o:o + f.p] = c * f.alpha
        t[o:o + f.p] = f.t
        o += f.p
    return METriple(alpha, T, t, check="none")


def _product_term(density: METriple, survivors: Sequence[METriple]):
    """Normalised triple of ``f_d(x) prod_w SF_w(x)`` and its total mass."""
    if not survivors:
        return density, 1.0
    alpha = mc.kron_prod_all([density.alpha] + [s.alpha for s in survivors])
    T = mc.kron_sum_all([density.T] + [s.T for s in survivors])
    t = mc.kron_prod_all([density.t] + [s.l for s in survivors])
    mass = float(alpha @ mc.neg_power_solve(T, t, 1))
    if not mass > 0:
        raise InvariantError("order-statistic term has nonpositive mass")
    return METriple(alpha / mass, T, t, check="none"), mass


def _identical(triples):
    a = triples[0]
    return all(
        b is a or (b.p == a.p and np.array_equal(b.alpha, a.alpha) and np.array_equal(b.T, a.T) and np.array_equal(b.t, a.t))
        for b in triples[1:]
    )


def order_stat_indep(triples: Sequence[METriple], k: int) -> MEAffineMixture:
    """Law of the k-th smallest of independent ME variables, as an affine mixture.

    Every distribution function ``F_a = 1 - SF_a`` is expanded so that each
    term is a density times a product of survival functions, which is again
    ME through Kronecker products and sums. Identical inputs use the
    binomial form with ``k`` terms instead of ``n 2^{n-1}``.
    """
    triples = list(triples)
    n = len(triples)
    k = int(k)
    if n == 0 or not 1 <= k <= n:
        raise DomainError(f"order statistic index k={k} out of range for n={n}")
    if n == 1:
        return MEAffineMixture([1.0], triples, check="none")
    weights, comps = [], []
    if _identical(triples):
        f = triples[0]
        lead = n * comb(n - 1, k - 1)
        for j in range(k):
            coef = lead * comb(k - 1, j) * (-1) ** j
            tr, mass = _product_term(f, [f] * (n - k + j))
            weights.append(coef * mass)
            comps.append(tr)
    else:
        for d in range(n):
            rest = [i for i in range(n) if i != d]
            for size in range(n - k, n):
                coef = (-1) ** (size - n + k) * comb(size, n - k)
                for W in itertools.combinations(rest, size):
                    tr, mass = _product_term(triples[d], [triples[w] for w in W])
                    weights.append(coef * mass)
                    comps.append(tr)
    w = np.array(weights)
    # the exact weights sum to one; remove rounding drift
    w = w / w.sum()
    return MEAffineMixture(w, comps, check="none")


def residual(tr: METriple, z: float, ctx=None) -> METriple:
    """Law of ``X - z`` given ``X > z``."""
    ctx = mc._ctx(ctx)
    z = float(z)
    if z < 0:
        raise DomainError("residual point must be nonnegative")
    if z == 0:
        return tr
    a = tr.alpha @ mc.expm(tr.T * z)
    s = float(a @ tr.l)
    if not s > ctx.underflow:
        raise UnderflowError(f"survival at z={z} is {s:.3g}; the tail is numerically extinct")
    return METriple(a / s, tr.T, tr.t, check="none")


def equilibrium_chain(tr: METriple, r: int):
    """Initial vector of the r-th order equilibrium law and the product of the
    means of orders 0..r-1 (which equals ``E[X^r]/r!``)."""
    r = int(r)
    if r < 1:
        raise DomainError("equilibrium order must be at least 1")
    # order 1: integrated tail of alpha e^{Tx} t is alpha e^{Tx} l
    m = float(tr.alpha @ mc.neg_power_solve(tr.T, tr.l, 1))
    a = tr.alpha / m
    prod = m
    for _ in range(r - 1):
        # the integrated tail of a e^{Tx} l is a (-T)^{-1} e^{Tx} l
        b = mc.neg_power_solve(tr.T.T, a, 1)
        m = float(b @ mc.neg_power_solve(tr.T, tr.l, 1))
        a = b / m
        prod *= m
    return a, prod


def equilibrium(tr: METriple, r: int) -> METriple:
    """r-th order equilibrium (iterated integrated-tail) distribution, exit vector ``l``."""
    a, _ = equilibrium_chain(tr, r)
    return METriple(a, tr.T, tr.l, check="none")


def esscher_block(T, n: int, lam: float):
    """``(n+1)``-block matrix with ``T - lam I`` on the diagonal and ``I`` above it."""
    T = np.asarray(T, dtype=float)
    p = T.shape[0]
    D = T - lam * np.eye(p)
    return mc.block_bidiagonal([D] * (n + 1), [np.eye(p)] * n)


def esscher_size_biased(tr: METriple, ep: EsscherParams | tuple) -> EsscherResult:
    """Density proportional to ``x^n e^{-lam x} f(x)`` and its normaliser ``C``."""
    if not isinstance(ep, EsscherParams):
        ep = EsscherParams(*ep)
    n, lam = int(ep.n), float(ep.lam)
    if not lam > tr.kappa:
        raise DomainError(f"tilt lambda={lam} must exceed the spectral abscissa {tr.kappa:.4g}")
    if n == 0 and lam == 0.0:
        return EsscherResult(tr, 1.0)
    p = tr.p
    # C = n! alpha (lam I - T)^{-(n+1)} t
    shifted = tr.T - lam * np.eye(p)
    C = factorial(n) * float(tr.alpha @ mc.neg_power_solve(shifted, tr.t, n + 1))
    if not C > 0:
        raise DomainError("Esscher normaliser is not positive")
    Tb = esscher_block(tr.T, n, lam)
    alpha = np.zeros((n + 1) * p)
    alpha[:p] = factorial(n) / C * tr.alpha
    t = np.zeros((n + 1) * p)
    t[n * p:] = tr.t
    return EsscherResult(METriple(alpha, Tb, t, check="none"), C)

