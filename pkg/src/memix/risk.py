"""Risk measures, aggregation, reinsurance premiums and capital allocation
for ME laws and MMEam portfolios."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from . import matcore as mc
from . import medist as md
from . import mmeam as mm
from .errors import (
    ConvergenceError,
    DegenerateModelError,
    DimensionError,
    DomainError,
    UnderflowWarning,
)
from .medist import MEAffineMixture, METriple
from .mmeam import MMEamModel

__all__ = [
    "quantile",
    "quantile_of_cdf",
    "tail_expectation",
    "stop_loss",
    "mtce",
    "mtcov",
    "aggregate",
    "stop_loss_moment",
    "excess_cross_moment",
    "tail_power_integral",
    "joint_tail_moment",
    "ReinsuranceSpec",
    "reinsurance_premium",
    "covar",
    "weighted_premium",
    "Allocation",
    "allocate",
    "assemble_tail_allocation",
    "assemble_covariance_allocation",
]


# ------------------------------------------------------------------ quantiles

def quantile_of_cdf(cdf: Callable[[float], float], theta: float, kappa: float, ctx=None) -> float:
    """Smallest ``x >= 0`` with ``cdf(x) = theta`` for a continuous increasing CDF.

    The upper bracket starts at the exponential-tail guess
    ``-log(1-theta)/|kappa|`` and doubles; the root is then polished by
    Brent's method until ``|cdf(x) - theta| <= root_tol``.
    """
    ctx = mc._ctx(ctx)
    theta = float(theta)
    if not 0.0 <= theta < 1.0:
        raise DomainError(f"level {theta} outside [0, 1)")
    if theta == 0.0 or cdf(0.0) >= theta:
        return 0.0
    # floored so that tiny levels do not start doubling from ~theta
    hi = max(-np.log1p(-theta), 1e-3) / abs(kappa)
    lo = 0.0
    it = 0
    while cdf(hi) < theta:
        lo = hi
        hi *= 2.0
        it += 1
        if it > ctx.root_maxiter or not np.isfinite(hi):
            raise ConvergenceError(f"could not bracket the {theta}-quantile")
    g = lambda x: cdf(x) - theta
    try:
        x, res = brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                        maxiter=ctx.root_maxiter, full_output=True, disp=False)
    except (RuntimeError, ValueError) as exc:
        raise ConvergenceError(f"quantile root finding failed: {exc}") from exc
    if not res.converged or abs(g(x)) > ctx.root_tol:
        raise ConvergenceError(f"quantile not converged: |F(x)-theta| = {abs(g(x)):.3g}")
    return float(x)


def quantile(d, theta: float, ctx=None) -> float:
    """Value-at-Risk of an ME triple or affine mixture."""
    return quantile_of_cdf(d.cdf, theta, d.kappa, ctx)


def stop_loss(d, z: float, r: int = 1) -> float:
    """``E[(X - z)_+^r] = r! alpha e^{Tz} (-T)^{-(r+1)} t`` summed over the mixture."""
    r = int(r)
    total = 0.0
    for c, f in zip(d.weights, d.components):
        a = f.alpha @ mc.expm(f.T * z) if z > 0 else f.alpha
        total += c * factorial(r) * float(a @ mc.neg_power_solve(f.T, f.t, r + 1))
    return total


def tail_expectation(d, theta: float, ctx=None) -> float:
    """TCE (= TV@R for continuous laws): ``V@R + E[X - V@R | X > V@R]``."""
    v = quantile(d, theta, ctx)
    if v == 0.0:
        return d.mean
    return v + stop_loss(d, v, 1) / d.sf(v)


# ------------------------------------------------------------- multivariate

def _levels(m: MMEamModel, theta):
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (m.M,))
    return np.array([quantile(mm.marginal(m, j), theta[j]) for j in range(m.M)])


def mtce(m: MMEamModel, theta, ctx=None) -> np.ndarray:
    """``E[X | X > V@R_theta(X)]`` componentwise."""
    z = _levels(m, theta)
    res = mm.residual_lifetime(m, z, ctx)
    e = np.eye(m.M, dtype=int)
    return z + np.array([mm.cross_moment(res, e[j]) for j in range(m.M)])


def mtcov(m: MMEamModel, theta, ctx=None) -> np.ndarray:
    """Conditional covariance matrix of ``X`` given ``X > V@R_theta(X)``."""
    z = _levels(m, theta)
    res = mm.residual_lifetime(m, z, ctx)
    e = np.eye(m.M, dtype=int)
    mean = np.array([mm.cross_moment(res, e[j]) for j in range(m.M)])
    C = np.empty((m.M, m.M))
    for a in range(m.M):
        for b in range(a, m.M):
            C[a, b] = C[b, a] = mm.cross_moment(res, e[a] + e[b]) - mean[a] * mean[b]
    return C


class _ConvCache:
    def __init__(self, m):
        self.m = m
        self.cache = {}

    def triple(self, row, skip=None):
        comps = [self.m.pools[c][row[c]] for c in range(self.m.M) if c != skip]
        key = tuple(id(f) for f in comps)
        if key not in self.cache:
            self.cache[key] = md.convolve(comps)
        return self.cache[key]


def aggregate(m: MMEamModel) -> MEAffineMixture:
    """Law of ``S = X_1 + ... + X_M`` as an affine mixture of convolution triples."""
    cc = _ConvCache(m)
    comps = [cc.triple(row) for row in m.index]
    return MEAffineMixture(np.asarray(m.p), comps, check="none")


def stop_loss_moment(m, d: float, r: int = 1, ctx=None) -> float:
    """``E[(S - d)_+^r]`` for the aggregate loss of ``m`` (or for an ME law)."""
    ctx = mc._ctx(ctx)
    if d < 0:
        raise DomainError("deductible must be nonnegative")
    if int(r) < 1:
        raise DomainError("r must be positive")
    S = aggregate(m) if isinstance(m, MMEamModel) else m
    if S.sf(d) <= ctx.underflow:
        warnings.warn(f"survival of S at d={d} underflows; stop-loss moment set to 0", UnderflowWarning)
        return 0.0
    return stop_loss(S, d, r)


def excess_cross_moment(m: MMEamModel, z, r, conditional: bool = True, ctx=None) -> float:
    """``E[prod (X_j - z_j)^{r_j} | X > z]`` or, unconditionally,
    ``E[prod (X_j - z_j)_+^{r_j}]`` (the conditional value times the joint survival)."""
    z = np.asarray(z, dtype=float)
    val = mm.cross_moment(mm.residual_lifetime(m, z, ctx), r)
    return val if conditional else val * m.survival(z)


def tail_power_integral(B, n: int, y: float) -> np.ndarray:
    """``int_y^inf u^n e^{Bu} du = e^{By} sum_k (-B)^{-(n-k+1)} n!/k! y^k`` for stable ``B``."""
    B = np.asarray(B, dtype=float)
    n = int(n)
    if n < 0 or y < 0:
        raise DomainError("need n >= 0 and y >= 0")
    inv = mc.neg_matrix_power(B, 1)
    acc = np.zeros_like(B)
    P = inv.copy()
    for k in range(n, -1, -1):
        acc = acc + P * (factorial(n) / factorial(k) * y ** k)
        P = P @ inv
    return mc.expm(B * y) @ acc if y > 0 else acc


def joint_block(fj: METriple, rest: METriple, k: int):
    """Block matrix coupling the k-th size-biased chain of ``fj`` with the sum of
    the remaining risks, with its entry and exit vectors (entry scaled by k!)."""
    Tk = md.esscher_block(fj.T, k, 0.0)
    pk = Tk.shape[0]
    tk = np.zeros(pk)
    tk[pk - fj.p:] = fj.t
    A = mc.block_bidiagonal([Tk, rest.T], [np.outer(tk, rest.alpha)])
    a = np.zeros(A.shape[0])
    a[: fj.p] = factorial(k) * fj.alpha
    e = np.zeros(A.shape[0])
    e[pk:] = rest.t
    return A, a, e


def _joint_terms(m: MMEamModel, j, k):
    """Yield ``(weight, matrix, entry, exit)`` for each multi-index."""
    cc = _ConvCache(m)
    blocks = {}
    if k == 0:
        for row, w in zip(m.index, m.p):
            tr = cc.triple(row)
            yield w, tr.T, tr.alpha, tr.t
        return
    for row, w in zip(m.index, m.p):
        fj = m.pools[j][row[j]]
        rest = cc.triple(row, skip=j)
        key = (id(fj), id(rest))
        if key not in blocks:
            blocks[key] = joint_block(fj, rest, k)
        A, a, e = blocks[key]
        yield w, A, a, e


def joint_tail_moment(m: MMEamModel, j, k: int, h: int, y: float) -> float:
    """``E[X_j^k S^h 1{S > y}]``; ``j`` is ignored when ``k = 0``."""
    k, h = int(k), int(h)
    if k < 0 or h < 0 or y < 0:
        raise DomainError("need k, h, y >= 0")
    if k >= 1:
        if m.M < 2:
            raise DomainError("joint tail moments with k >= 1 need at least two risks")
        if not 0 <= j < m.M:
            raise DimensionError("coordinate out of range")
    total = 0.0
    for w, A, a, e in _joint_terms(m, j, k):
        total += w * float(a @ tail_power_integral(A, h, y) @ e)
    return total


# ------------------------------------------------------------- reinsurance

@dataclass(frozen=True)
class ReinsuranceSpec:
    """Treaty on the order statistics of the portfolio.

    ``treaty`` is ``"lcr"`` or ``"ecomor"`` (with ``k``) or ``"per_os"`` with
    ``g`` a list of M ceded-loss rules, one per order statistic (smallest
    first): ``("proportional", a)``, ``("excess", z)``, ``("full",)`` or
    ``("none",)``.
    """

    treaty: str
    k: int = 1
    g: tuple = field(default_factory=tuple)


def reinsurance_premium(m: MMEamModel, spec: ReinsuranceSpec) -> float:
    M = m.M
    means = {}

    def os_mean(j):
        if j not in means:
            means[j] = mm.order_statistic(m, j).mean
        return means[j]

    if spec.treaty == "lcr":
        if not 1 <= spec.k <= M:
            raise DomainError("LCR(k) needs 1 <= k <= M")
        return float(sum(os_mean(j) for j in range(M - spec.k + 1, M + 1)))
    if spec.treaty == "ecomor":
        if not 2 <= spec.k <= M:
            raise DomainError("ECOMOR(k) needs 2 <= k <= M")
        k = spec.k
        return float(sum(os_mean(j) for j in range(M - k + 2, M + 1)) - (k - 1) * os_mean(M - k + 1))
    if spec.treaty == "per_os":
        if len(spec.g) != M:
            raise DomainError("per_os needs one rule per order statistic")
        total = 0.0
        for j, rule in enumerate(spec.g, start=1):
            kind = rule[0]
            if kind == "none":
                continue
            if kind == "full":
                total += os_mean(j)
            elif kind == "proportional":
                a = float(rule[1])
                if not 0.0 <= a <= 1.0:
                    raise DomainError("proportional share must lie in [0, 1]")
                total += a * os_mean(j)
            elif kind == "excess":
                z = float(rule[1])
                if z < 0:
                    raise DomainError("excess retention must be nonnegative")
                total += stop_loss(mm.order_statistic(m, j), z, 1)
            else:
                raise DomainError(f"unknown ceded-loss rule {kind!r}")
        return float(total)
    raise DomainError(f"unknown treaty {spec.treaty!r}")


# -------------------------------------------------------------------- CoV@R

def covar(m: MMEamModel, mode: str, theta1: float, theta2: float, j1: int = 0, j2: int = 1, ctx=None) -> float:
    """Conditional V@R of ``X_j2`` (or of ``S``) given stress on ``X_j1``.

    ``eq``: given ``X_j1 = V@R``; ``gt``: given ``X_j1 > V@R``;
    ``sum_given_x1``: V@R of ``S`` given ``X_j1 > V@R``.
    """
    if m.M < 2:
        raise DomainError("CoV@R needs at least two risks")
    if j1 == j2 and mode != "sum_given_x1":
        raise DomainError("conditioning and target coordinates must differ")
    z = quantile(mm.marginal(m, j1), theta1, ctx)
    if mode == "eq":
        cond = mm.condition_on(m, {j1: z})
        pos = [c for c in range(m.M) if c != j1].index(j2)
        return quantile(mm.marginal(cond, pos), theta2, ctx)
    zz = np.zeros(m.M)
    zz[j1] = z
    res = mm.residual_lifetime(m, zz, ctx)
    if mode == "gt":
        return quantile(mm.marginal(res, j2), theta2, ctx)
    if mode == "sum_given_x1":
        return z + quantile(aggregate(res), theta2, ctx)
    raise DomainError(f"unknown CoV@R mode {mode!r}")


def weighted_premium(m: MMEamModel, j: int, n, lam) -> float:
    """``E[X_j w(X)] / E[w(X)]`` with ``w(x) = prod x_i^{n_i} e^{-lam_i x_i}``."""
    tm, _ = mm.esscher(m, n, lam)
    e = np.zeros(m.M, dtype=int)
    e[j] = 1
    return mm.cross_moment(tm, e)


# --------------------------------------------------------------- allocation

class Allocation(NamedTuple):
    allocations: np.ndarray
    total: float
    var: float
    rule: str
    theta: float
    beta: float


RULES = ("covariance", "tcovp", "tcpa")


def assemble_covariance_allocation(EX, EXS, ES, ES2, tvar):
    """``E[X_j] + Cov(X_j,S)/Var(S) (TV@R - E[S])``; allocations sum to ``tvar``."""
    var_s = ES2 - ES ** 2
    if not var_s > 0:
        raise DegenerateModelError("Var(S) is zero")
    cov = EXS - EX * ES
    return EX + cov / var_s * (tvar - ES)


def assemble_tail_allocation(rule, beta, M, jtm, y):
    """Tail-covariance rules from a joint tail-moment callable ``jtm(j, k, h, y)``.

    Returns ``(allocations, total)``; the total is computed from the law of
    ``S`` alone so that additivity is a genuine check.
    """
    q = jtm(None, 0, 0, y)
    if not q > 0:
        raise DegenerateModelError("tail event {S > V@R} has zero probability")
    es1 = jtm(None, 0, 1, y) / q
    es2 = jtm(None, 0, 2, y) / q
    var_t = es2 - es1 ** 2
    ex = np.array([jtm(j, 1, 0, y) for j in range(M)]) / q
    exs = np.array([jtm(j, 1, 1, y) for j in range(M)]) / q
    cov = exs - ex * es1
    if rule == "tcovp":
        return ex + beta * cov, es1 + beta * var_t
    if rule == "tcpa":
        if not var_t > 0:
            raise DegenerateModelError("tail variance of S is zero")
        sd = np.sqrt(var_t)
        return ex + beta * cov / sd, es1 + beta * sd
    raise DomainError(f"unknown rule {rule!r}")


def _check_request(rule, theta, beta):
    if rule not in RULES:
        raise DomainError(f"unknown allocation rule {rule!r}; choose from {RULES}")
    if not 0.0 <= theta < 1.0:
        raise DomainError("theta must lie in [0, 1)")
    if beta < 0:
        raise DomainError("beta must be nonnegative")


def allocate(m: MMEamModel, rule: str = "covariance", theta: float = 0.9, beta: float = 0.0, ctx=None) -> Allocation:
    """Capital allocation under the covariance, TCovP or TCPA rule.

    The totals are TV@R, TVP and TSDP of ``S`` respectively.
    """
    _check_request(rule, theta, beta)
    S = aggregate(m)
    y = quantile(S, theta, ctx)
    M = m.M
    if rule == "covariance":
        e = np.eye(M, dtype=int)
        EX = np.array([mm.cross_moment(m, e[j]) for j in range(M)])
        EXS = np.array([sum(mm.cross_moment(m, e[j] + e[i]) for i in range(M)) for j in range(M)])
        ES, ES2 = S.moment(1), S.moment(2)
        tvar = y + stop_loss(S, y, 1) / S.sf(y) if y > 0 else ES
        return Allocation(assemble_covariance_allocation(EX, EXS, ES, ES2, tvar), float(tvar), y, rule, theta, beta)
    if M == 1:
        q = S.sf(y)
        es1 = y + stop_loss(S, y, 1) / q
        var_t = stop_loss(S, y, 2) / q - (es1 - y) ** 2
        tot = es1 + beta * (var_t if rule == "tcovp" else np.sqrt(var_t))
        return Allocation(np.array([tot]), float(tot), y, rule, theta, beta)
    jtm = lambda j, k, h, yy: joint_tail_moment(m, j, k, h, yy)
    alloc, total = assemble_tail_allocation(rule, beta, M, jtm, y)
    return Allocation(alloc, float(total), y, rule, theta, beta)
