"""Independent checks: Monte Carlo simulation of MMEam vectors and low-dimensional quadrature.

Sampling is blockwise with one counter-based Philox stream per block, so
the sample matrix depends only on ``(seed, sample_count)`` and never on how
many threads produced it.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.interpolate import PchipInterpolator

from . import risk as rk
from .errors import ConvergenceError, DomainError, EstimationError, UnsupportedModelError
from .medist import MEAffineMixture, METriple
from .mmeam import MMEamModel

__all__ = [
    "SimConfig",
    "InverseCDF",
    "simulate",
    "MCEstimate",
    "mc_estimate",
    "mc_mean",
    "mc_cross_moment",
    "mc_tail_moment",
    "mc_quantile",
    "mc_conditional_mean",
    "mc_rank_corr",
    "batch_estimate",
    "quad_integrate",
    "QuadResult",
]

BLOCK = 65_536
KNOTS = 1024


@dataclass(frozen=True)
class SimConfig:
    sample_count: int
    seed: int = 0
    parallel_streams: int = 1

    def __post_init__(self):
        if int(self.sample_count) < 1:
            raise DomainError("sample_count must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if int(self.parallel_streams) < 1:
            raise DomainError("parallel_streams must be positive")


class InverseCDF:
    """Quantile function of a univariate ME law.

    A monotone cubic (PCHIP) interpolant through ``KNOTS`` points of the
    distribution function, with an exponential tail beyond the last knot
    that continues the hazard rate found there. ``exact`` inverts by root
    finding for every deviate and serves as the reference.
    """

    def __init__(self, f: METriple | MEAffineMixture, knots: int = KNOTS, tail: float = 1e-12):
        self.f = f
        rate = abs(f.kappa)
        x_hi = max(1.0, 1.0 / rate)
        while f.sf(x_hi) > tail:
            x_hi *= 2.0
        # uniform knots plus a geometric cluster near the origin, where the
        # quantile function of a law with f(0) = 0 has unbounded slope
        n_geo = knots // 4
        xs = np.unique(np.concatenate([np.linspace(0.0, x_hi, knots - n_geo),
                                       np.geomspace(x_hi * 1e-7, x_hi / 64, n_geo)]))
        F = np.clip(np.maximum.accumulate(np.asarray(f.cdf(xs), dtype=float)), 0.0, 1.0)
        F[0] = 0.0
        keep = np.concatenate([[True], np.diff(F) > 0])
        self._x, self._F = xs[keep], F[keep]
        self._interp = PchipInterpolator(self._F, self._x, extrapolate=False)
        self._x_hi = float(self._x[-1])
        self._sf_hi = max(1.0 - float(self._F[-1]), 1e-300)
        hz = float(f.pdf(self._x_hi)) / float(f.sf(self._x_hi)) if f.sf(self._x_hi) > 0 else rate
        self._hazard = hz if hz > 0 and np.isfinite(hz) else rate

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        body = u <= self._F[-1]
        out[body] = self._interp(u[body])
        tl = ~body
        if np.any(tl):
            out[tl] = self._x_hi + np.log(self._sf_hi / np.maximum(1.0 - u[tl], 1e-300)) / self._hazard
        return out

    def exact(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        kap = self.f.kappa
        return np.array([rk.quantile_of_cdf(lambda x: float(self.f.cdf(x)), float(v), kap) if v > 0 else 0.0
                         for v in u])


def _block_rng(seed: int, b: int) -> np.random.Generator:
    # the Philox key carries the seed, the counter's high word the block id
    bg = np.random.Philox(key=int(seed), counter=[0, 0, 0, int(b)])
    return np.random.Generator(bg)


def simulate(m: MMEamModel, cfg: SimConfig, method: str = "cache") -> np.ndarray:
    """Draw ``cfg.sample_count`` vectors from a nonnegative-weight MMEam.

    A multi-index ``omega`` is drawn from the weights, then coordinate ``j``
    from component ``omega_j`` of pool ``j`` by inverting its CDF.
    ``method="exact"`` uses root finding for every deviate (slow).
    """
    if not m.nonnegative:
        raise UnsupportedModelError("simulation requires nonnegative mixture weights")
    if method not in ("cache", "exact"):
        raise DomainError(f"unknown method {method!r}")
    N, M = int(cfg.sample_count), m.M
    cum = np.cumsum(m.p)
    cum /= cum[-1]
    idx = np.asarray(m.index)
    used = [np.unique(idx[:, j]) for j in range(M)]
    inv = {(j, int(k)): InverseCDF(m.pools[j][k]) for j in range(M) for k in used[j]}
    out = np.empty((N, M))

    def run(b):
        lo, hi = b * BLOCK, min(N, (b + 1) * BLOCK)
        rng = _block_rng(cfg.seed, b)
        U = rng.random((hi - lo, M + 1))
        rows = np.minimum(np.searchsorted(cum, U[:, 0], side="right"), cum.size - 1)
        comp = idx[rows]
        for j in range(M):
            for k in used[j]:
                sel = comp[:, j] == k
                if np.any(sel):
                    q = inv[(j, int(k))]
                    out[lo:hi][sel, j] = q(U[sel, j + 1]) if method == "cache" else q.exact(U[sel, j + 1])

    nblocks = -(-N // BLOCK)
    if cfg.parallel_streams == 1 or nblocks == 1:
        for b in range(nblocks):
            run(b)
    else:
        with ThreadPoolExecutor(max_workers=int(cfg.parallel_streams)) as ex:
            list(ex.map(run, range(nblocks)))
    return out


# ----------------------------------------------------------------- estimators

class MCEstimate(NamedTuple):
    estimate: float | np.ndarray
    std_error: float | np.ndarray
    n: int


def _warn_small(n, what):
    if n < 100:
        warnings.warn(f"only {n} samples in {what}; the standard error is unreliable", RuntimeWarning, stacklevel=3)


def mc_mean(samples) -> MCEstimate:
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n = X.shape[0]
    return MCEstimate(X.mean(axis=0), X.std(axis=0, ddof=1) / np.sqrt(n), n)


def mc_cross_moment(samples, r: Sequence[int]) -> MCEstimate:
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    v = np.prod(X ** np.asarray(r, dtype=float), axis=1)
    return MCEstimate(float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)), v.size)


def mc_tail_moment(samples, j, k: int, h: int, y: float) -> MCEstimate:
    """``E[X_j^k S^h 1{S > y}]`` (unconditional)."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    S = X.sum(axis=1)
    v = (S ** h) * (S > y)
    if k:
        v = v * X[:, j] ** k
    return MCEstimate(float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)), v.size)


def _kde_density(x, at):
    n = x.size
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    scale = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * scale * n ** (-0.2)
    if not bw > 0:
        raise EstimationError("degenerate sample: cannot estimate a density")
    return float(np.mean(np.exp(-0.5 * ((at - x) / bw) ** 2)) / (bw * np.sqrt(2 * np.pi)))


def mc_quantile(x, theta: float) -> MCEstimate:
    """Sample quantile with a delta-method standard error using a Gaussian-kernel density."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise EstimationError("no samples")
    _warn_small(x.size, "quantile estimate")
    q = float(np.quantile(x, theta))
    dens = _kde_density(x, q)
    return MCEstimate(q, float(np.sqrt(theta * (1 - theta) / x.size) / dens), x.size)


def mc_conditional_mean(samples, z, r: Sequence[int] | None = None) -> MCEstimate:
    """``E[prod X^r | X > z]`` (componentwise event); ``r=None`` gives the mean vector."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    sel = np.all(X > np.asarray(z, dtype=float), axis=1)
    n = int(sel.sum())
    if n == 0:
        raise EstimationError("conditioning event contains no samples")
    _warn_small(n, "conditioning event")
    Y = X[sel]
    if r is None:
        return MCEstimate(Y.mean(axis=0), Y.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.inf, n)
    v = np.prod(Y ** np.asarray(r, dtype=float), axis=1)
    return MCEstimate(float(v.mean()), float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else np.inf, n)


def batch_estimate(fn: Callable[[np.ndarray], float | np.ndarray], samples, batches: int = 50) -> MCEstimate:
    """Plug-in estimate ``fn(samples)`` with a batch-means standard error.

    Works for any smooth functional, including ratios and quantile-based
    quantities, at the cost of a small ``O(batches / n)`` bias in the SE.
    """
    X = np.asarray(samples)
    n = X.shape[0]
    if n < 2 * batches:
        raise EstimationError(f"need at least {2 * batches} samples for {batches} batches")
    est = np.asarray(fn(X), dtype=float)
    parts = np.array([np.asarray(fn(b), dtype=float) for b in np.array_split(X, batches)])
    se = parts.std(axis=0, ddof=1) / np.sqrt(batches)
    if est.ndim == 0:
        return MCEstimate(float(est), float(se), n)
    return MCEstimate(est, se, n)


def mc_rank_corr(samples, j1: int = 0, j2: int = 1, kind: str = "kendall", batches: int = 50) -> MCEstimate:
    """Sample Kendall tau or Spearman rho of coordinates ``j1, j2``."""
    if kind == "kendall":
        f = lambda X: stats.kendalltau(X[:, j1], X[:, j2]).statistic
    elif kind == "spearman":
        f = lambda X: stats.spearmanr(X[:, j1], X[:, j2]).statistic
    else:
        raise DomainError(f"unknown rank correlation {kind!r}")
    return batch_estimate(f, np.asarray(samples), batches)


def mc_estimate(samples, functional: str, **kw) -> MCEstimate:
    """Dispatch by name: ``mean``, ``cross_moment`` (r), ``tail_moment`` (j, k, h, y),
    ``quantile`` (theta, optional j), ``conditional_mean`` (z, optional r)."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if functional == "mean":
        return mc_mean(X)
    if functional == "cross_moment":
        return mc_cross_moment(X, kw["r"])
    if functional == "tail_moment":
        return mc_tail_moment(X, kw.get("j"), kw.get("k", 0), kw.get("h", 0), kw["y"])
    if functional == "quantile":
        j = kw.get("j")
        col = X.sum(axis=1) if j is None else X[:, j]
        return mc_quantile(col, kw["theta"])
    if functional == "conditional_mean":
        return mc_conditional_mean(X, kw["z"], kw.get("r"))
    raise DomainError(f"unknown functional {functional!r}")


# ----------------------------------------------------------------- quadrature

class QuadResult(NamedTuple):
    value: float
    error: float


def quad_integrate(fn: Callable[..., float], lower: Sequence[float], upper: Sequence[float] | None = None,
                   kappa: float = -1.0, tol: float = 1e-8, strict: bool = True) -> QuadResult:
    """Integrate ``fn(x_1, .., x_d)`` over a box in ``[0, inf)^d`` for ``d <= 3``.

    Infinite upper limits are truncated at ``lower + 60 / |kappa|``, where the
    integrand of an ME-type law has decayed below double precision.
    """
    lower = [float(a) for a in lower]
    d = len(lower)
    if not 1 <= d <= 3:
        raise DomainError("quadrature supports 1 to 3 dimensions")
    upper = [np.inf] * d if upper is None else [float(b) for b in upper]
    if not kappa < 0:
        raise DomainError("kappa must be negative")
    cut = 60.0 / abs(kappa)
    ranges = [(a, a + cut if not np.isfinite(b) else b) for a, b in zip(lower, upper)]
    opts = {"epsabs": tol, "epsrel": 0.0, "limit": 200}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.nquad(fn, ranges, opts=[opts] * d)
    bad = [w for w in caught if issubclass(w.category, integrate.IntegrationWarning)]
    if strict and bad:
        exc = ConvergenceError(f"quadrature did not converge: {bad[0].message}; estimate {val!r}")
        exc.estimate = val
        raise exc
    return QuadResult(float(val), float(err))
