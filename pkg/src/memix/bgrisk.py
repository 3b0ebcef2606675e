"""Multiplicative background risk ``X† = X / B`` with ``B > 0`` independent of ``X``.

Everything reduces to generalised Laplace transforms
``G_l(z) = E[B^l e^{-zB}]`` evaluated at matrix arguments ``-T y``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np
from scipy.special import gammaln

from . import matcore as mc
from . import mmeam as mm
from . import risk as rk
from .errors import DomainError
from .mmeam import MMEamModel

__all__ = [
    "BackgroundRisk",
    "matrix_laplace",
    "bg_marginal_cdf",
    "BgAggregate",
    "bg_aggregate",
    "bg_joint_tail_moment",
    "bg_allocate",
    "parse_background",
]


@dataclass(frozen=True)
class BackgroundRisk:
    """Law of the positive scaling factor ``B``.

    Use the constructors :meth:`degenerate`, :meth:`gamma`, :meth:`discrete`
    or :meth:`custom`.
    """

    kind: str
    params: tuple
    transform: Callable | None = None
    moment_fn: Callable | None = None
    re_min: float | None = None

    # -- constructors
    @classmethod
    def degenerate(cls, b: float = 1.0) -> "BackgroundRisk":
        b = float(b)
        if not b > 0:
            raise DomainError("degenerate background level must be positive")
        return cls("degenerate", (b,))

    @classmethod
    def gamma(cls, shape: float, rate: float) -> "BackgroundRisk":
        a, beta = float(shape), float(rate)
        if not (a > 0 and beta > 0):
            raise DomainError("gamma background needs positive shape and rate")
        return cls("gamma", (a, beta), re_min=-beta)

    @classmethod
    def discrete(cls, points, probs) -> "BackgroundRisk":
        r = tuple(float(v) for v in points)
        q = tuple(float(v) for v in probs)
        if len(r) != len(q) or not r:
            raise DomainError("need one probability per support point")
        if any(v <= 0 for v in r):
            raise DomainError("support points must be positive")
        if any(v < 0 for v in q) or abs(sum(q) - 1.0) > 1e-12:
            raise DomainError("probabilities must be nonnegative and sum to 1")
        return cls("discrete", (r, q))

    @classmethod
    def custom(cls, transform, moment, re_min=None) -> "BackgroundRisk":
        """User law given by ``transform(l, z) = E[B^l e^{-zB}]`` (vectorised in
        complex ``z``) and ``moment(l) = E[B^l]`` (``inf`` when divergent)."""
        return cls("custom", (), transform=transform, moment_fn=moment, re_min=re_min)

    # -- scalar quantities
    def moment(self, ell: int) -> float:
        """``E[B^ell]`` (``inf`` if it diverges)."""
        ell = int(ell)
        if self.kind == "degenerate":
            return self.params[0] ** ell
        if self.kind == "gamma":
            a, beta = self.params
            if a + ell <= 0:
                return float("inf")
            return float(np.exp(gammaln(a + ell) - gammaln(a) - ell * np.log(beta)))
        if self.kind == "discrete":
            r, q = self.params
            return float(sum(qk * rk_ ** ell for rk_, qk in zip(r, q)))
        return float(self.moment_fn(ell))

    def require_moment(self, ell: int):
        if not np.isfinite(self.moment(ell)):
            raise DomainError(f"E[B^{int(ell)}] diverges")

    def scalar(self, ell: int):
        """Vectorised scalar function ``z -> G_ell(z)``."""
        ell = int(ell)
        if self.kind == "degenerate":
            b = self.params[0]
            return lambda z: b ** ell * np.exp(-z * b)
        if self.kind == "gamma":
            a, beta = self.params
            c = np.exp(a * np.log(beta) + gammaln(a + ell) - gammaln(a))
            return lambda z: c * np.exp(-(a + ell) * np.log(z + beta))
        if self.kind == "discrete":
            r, q = self.params
            return lambda z: sum(qk * rk_ ** ell * np.exp(-z * rk_) for rk_, qk in zip(r, q))
        return lambda z: self.transform(ell, z)


def matrix_laplace(bg: BackgroundRisk, ell: int, A, y: float = 1.0, method: str = "auto", ctx=None):
    """``G_ell(A y) = E[B^ell e^{-A y B}]`` for a matrix ``A`` with spectrum in the right half-plane.

    ``method="auto"`` uses matrix exponentials for degenerate and discrete
    laws and :func:`matcore.holo_matrix_func` otherwise; ``eigen`` and
    ``contour`` force the corresponding matrix-function route for any law.
    """
    ell = int(ell)
    A = np.asarray(A, dtype=float)
    bg.require_moment(ell)
    n = A.shape[0]
    y = float(y)
    if y < 0:
        raise DomainError("scale must be nonnegative")
    if y == 0.0:
        return bg.moment(ell) * np.eye(n)
    if np.min(np.linalg.eigvals(A).real) <= 0:
        raise DomainError("matrix argument must have its spectrum in the open right half-plane")
    Ay = A * y
    if method == "auto" and bg.kind == "degenerate":
        b = bg.params[0]
        return b ** ell * mc.expm(-Ay * b)
    if method == "auto" and bg.kind == "discrete":
        r, q = bg.params
        return sum(qk * rk_ ** ell * mc.expm(-Ay * rk_) for rk_, qk in zip(r, q))
    g = bg.scalar(ell)
    return mc.holo_matrix_func(g, Ay, "auto" if method == "auto" else method, domain_re_min=bg.re_min, ctx=ctx)


def bg_marginal_cdf(m: MMEamModel, bg: BackgroundRisk, j: int, x: float, method="auto") -> float:
    """``P(X_j / B <= x)``."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    if x == 0:
        return 0.0
    w = m.marginal_weights(j)
    sf = 0.0
    for k in np.flatnonzero(w):
        f = m.pools[j][k]
        sf += w[k] * float(f.alpha @ matrix_laplace(bg, 0, -f.T, x, method) @ f.l)
    return 1.0 - sf


class BgAggregate:
    """Distribution of ``S† = S / B``."""

    def __init__(self, m: MMEamModel, bg: BackgroundRisk, method="auto"):
        self.model, self.bg, self.method = m, bg, method
        self.S = rk.aggregate(m)

    def sf(self, x: float) -> float:
        if x < 0:
            raise DomainError("x must be nonnegative")
        if x == 0:
            return 1.0
        return float(sum(c * (f.alpha @ matrix_laplace(self.bg, 0, -f.T, x, self.method) @ f.l)
                         for c, f in zip(self.S.weights, self.S.components)))

    def cdf(self, x: float) -> float:
        return 1.0 - self.sf(x)

    def quantile(self, theta: float, ctx=None) -> float:
        return rk.quantile_of_cdf(self.cdf, theta, self.S.kappa, ctx)

    def tail_moment(self, h: int, y: float) -> float:
        return bg_joint_tail_moment(self.model, self.bg, None, 0, h, y, self.method)

    def tvar(self, theta: float, ctx=None) -> float:
        y = self.quantile(theta, ctx)
        return self.tail_moment(1, y) / self.tail_moment(0, y)


def bg_aggregate(m: MMEamModel, bg: BackgroundRisk, method="auto") -> BgAggregate:
    return BgAggregate(m, bg, method)


def _bg_term(bg, A, a, e, s, h, y, method):
    """``a {sum_l (-A)^{-(h-l+1)} G_{l-s}(-A y) h!/l! y^l} e``, where ``s`` is the
    total power of ``1/B`` carried by the moment."""
    inv = mc.neg_matrix_power(A, 1)
    total = 0.0
    for ell in range(h + 1):
        if y == 0 and ell > 0:
            break
        G = matrix_laplace(bg, ell - s, -A, y, method)
        P = np.linalg.matrix_power(inv, h - ell + 1)
        total += factorial(h) / factorial(ell) * y ** ell * float(a @ P @ G @ e)
    return total


def bg_joint_tail_moment(m: MMEamModel, bg: BackgroundRisk, j, k: int, h: int, y: float, method="auto") -> float:
    """``E[(X_j†)^k (S†)^h 1{S† > y}]``; ``j`` is ignored when ``k = 0``."""
    k, h = int(k), int(h)
    if k < 0 or h < 0 or y < 0:
        raise DomainError("need k, h, y >= 0")
    bg.require_moment(-(k + h))
    if k >= 1 and m.M < 2:
        raise DomainError("joint tail moments with k >= 1 need at least two risks")
    total = 0.0
    for w, A, a, e in rk._joint_terms(m, j, k):
        total += w * _bg_term(bg, A, a, e, k + h, h, y, method)
    return total


def bg_allocate(m: MMEamModel, bg: BackgroundRisk, rule="covariance", theta=0.9, beta=0.0, method="auto", ctx=None):
    """Allocation rules for ``X†``; totals are TV@R, TVP and TSDP of ``S†``."""
    rk._check_request(rule, theta, beta)
    bg.require_moment(-2)
    agg = bg_aggregate(m, bg, method)
    y = agg.quantile(theta, ctx)
    M = m.M
    jtm = lambda jj, kk, hh, yy: bg_joint_tail_moment(m, bg, jj, kk, hh, yy, method)
    if rule == "covariance":
        e = np.eye(M, dtype=int)
        b1, b2 = bg.moment(-1), bg.moment(-2)
        EX = np.array([mm.cross_moment(m, e[jj]) for jj in range(M)])
        EXS = np.array([sum(mm.cross_moment(m, e[jj] + e[i]) for i in range(M)) for jj in range(M)])
        ES, ES2 = agg.S.moment(1), agg.S.moment(2)
        tvar = jtm(None, 0, 1, y) / jtm(None, 0, 0, y)
        alloc = rk.assemble_covariance_allocation(EX * b1, EXS * b2, ES * b1, ES2 * b2, tvar)
        return rk.Allocation(alloc, float(tvar), y, rule, theta, beta)
    if M == 1:
        q = jtm(None, 0, 0, y)
        es1 = jtm(None, 0, 1, y) / q
        var_t = jtm(None, 0, 2, y) / q - es1 ** 2
        tot = es1 + beta * (var_t if rule == "tcovp" else np.sqrt(var_t))
        return rk.Allocation(np.array([tot]), float(tot), y, rule, theta, beta)
    alloc, total = rk.assemble_tail_allocation(rule, beta, M, jtm, y)
    return rk.Allocation(alloc, float(total), y, rule, theta, beta)


def parse_background(text: str) -> BackgroundRisk:
    """Parse ``degenerate:b``, ``gamma:a,rate`` or ``discrete:r1/q1,r2/q2,...``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "degenerate":
            return BackgroundRisk.degenerate(float(rest) if rest else 1.0)
        if kind == "gamma":
            a, b = (float(v) for v in rest.split(","))
            return BackgroundRisk.gamma(a, b)
        if kind == "discrete":
            pairs = [item.split("/") for item in rest.split(",")]
            return BackgroundRisk.discrete([float(r) for r, _ in pairs], [float(q) for _, q in pairs])
    except (ValueError, TypeError) as exc:
        raise DomainError(f"cannot parse background risk {text!r}: {exc}") from exc
    raise DomainError(f"unknown background kind {kind!r}")
