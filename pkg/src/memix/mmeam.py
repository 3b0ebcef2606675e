"""Multivariate ME affine mixtures (MMEam).

The joint density is ``sum_i p_i f_{i_1}(x_1) ... f_{i_M}(x_M)``. Coordinate
``j`` draws its ``i_j``-th component from its own pool, so a model with one
shared pool is the special case of identical pools. Weights are stored
sparsely as an ``(nnz, M)`` array of 0-based multi-indices and a vector of
real weights.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import matcore as mc
from . import medist as md
from .errors import (
    DegenerateModelError,
    DimensionError,
    DomainError,
    InvariantError,
    UnderflowError,
)
from .medist import MEAffineMixture, METriple

__all__ = [
    "MMEamModel",
    "independence_model",
    "joint_density",
    "joint_survival",
    "marginalize",
    "marginal",
    "condition_on",
    "cross_moment",
    "residual_lifetime",
    "esscher",
    "equilibrium",
    "order_statistic",
    "rank_corr",
    "c_table",
]


def _merge_duplicates(index, p):
    if index.shape[0] == 0:
        return index, p
    uniq, inv = np.unique(index, axis=0, return_inverse=True)
    acc = np.zeros(uniq.shape[0])
    np.add.at(acc, inv.ravel(), p)
    keep = acc != 0.0
    return uniq[keep], acc[keep]


class MMEamModel:
    """M-variate ME affine mixture.

    Parameters
    ----------
    pools : sequence of METriple, or sequence of M such sequences
        A flat sequence is one pool shared by every coordinate.
    index : (nnz, M) int array_like
        0-based component indices per coordinate.
    p : (nnz,) array_like
        Real weights summing to one.
    labels : sequence, optional
        Names of the coordinates (default ``0..M-1``), carried through
        marginalisation and conditioning.
    check : {"full", "norm", "none"}
        ``full`` additionally checks nonnegativity of the joint density on a
        product grid when some weight is negative.
    """

    __slots__ = ("_pools", "_index", "_p", "_labels", "_shared")

    def __init__(self, pools, index, p, *, labels=None, check="full", ctx=None, merge=True):
        ctx = mc._ctx(ctx)
        index = np.array(index, dtype=np.int64)
        if index.ndim == 1:
            index = index[:, None]
        p = np.array(p, dtype=float).ravel()
        if index.ndim != 2 or index.shape[0] != p.size:
            raise DimensionError("index must be (nnz, M) with one weight per row")
        M = index.shape[1]
        if M == 0:
            raise DimensionError("model needs at least one coordinate")
        pools = list(pools)
        if pools and isinstance(pools[0], METriple):
            shared = tuple(pools)
            pools = [shared] * M
            self._shared = True
        else:
            pools = [tuple(pl) for pl in pools]
            self._shared = all(pl is pools[0] for pl in pools) or all(
                len(pl) == len(pools[0]) and all(a is b for a, b in zip(pl, pools[0])) for pl in pools
            )
        if len(pools) != M:
            raise DimensionError(f"{len(pools)} pools for {M} coordinates")
        for j, pl in enumerate(pools):
            if len(pl) == 0 or not all(isinstance(f, METriple) for f in pl):
                raise DimensionError(f"pool {j} must be a non-empty list of METriple")
            if index.size and (index[:, j].min() < 0 or index[:, j].max() >= len(pl)):
                raise DimensionError(f"component index out of range in coordinate {j}")
        if not np.all(np.isfinite(p)):
            raise DomainError("non-finite weight")
        if merge:
            index, p = _merge_duplicates(index, p)
        if p.size == 0:
            raise InvariantError("model has no nonzero weight")
        if check != "none" and abs(p.sum() - 1.0) > ctx.weight_tol * max(1.0, float(np.abs(p).sum())):
            raise InvariantError(f"weights sum to {float(p.sum())!r}, expected 1")
        index.setflags(write=False)
        p.setflags(write=False)
        self._pools = tuple(pools)
        self._index = index
        self._p = p
        labels = tuple(range(M)) if labels is None else tuple(labels)
        if len(labels) != M:
            raise DimensionError("one label per coordinate required")
        self._labels = labels
        if check == "full" and np.any(p < 0):
            self._check_grid(ctx)

    # -- construction helpers
    @classmethod
    def from_dense(cls, pools, P, **kw):
        """Build from a dense weight array with one axis per coordinate."""
        P = np.asarray(P, dtype=float)
        idx = np.argwhere(P != 0.0)
        return cls(pools, idx, P[tuple(idx.T)], **kw)

    def _check_grid(self, ctx):
        M = self.M
        n = min(ctx.grid_points, max(8, int(round(4096 ** (1.0 / M)))))
        grids = []
        for j in range(M):
            kap = max(f.kappa for f in self._pools[j])
            x_max = ctx.grid_span / abs(kap)
            grids.append(np.concatenate([[0.0], np.geomspace(x_max * 1e-6, x_max, n - 1)]))
        mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, M)
        f = self.density(mesh)
        if f.min() < ctx.neg_tol * max(1.0, float(np.abs(f).max())):
            raise InvariantError(f"joint density is negative ({f.min():.3g}) on the validation grid")

    # -- attributes
    @property
    def M(self) -> int:
        return self._index.shape[1]

    @property
    def pools(self):
        return self._pools

    @property
    def shared(self) -> bool:
        return self._shared

    @property
    def index(self):
        return self._index

    @property
    def p(self):
        return self._p

    @property
    def labels(self):
        return self._labels

    @property
    def nnz(self) -> int:
        return self._p.size

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self._p >= 0))

    @property
    def kappa(self) -> float:
        return max(f.kappa for pl in self._pools for f in pl)

    def __repr__(self):
        return f"MMEamModel(M={self.M}, L={[len(pl) for pl in self._pools]}, nnz={self.nnz})"

    def pool_sizes(self):
        return [len(pl) for pl in self._pools]

    # -- evaluation tables
    def _table(self, j, x, what):
        """Array ``(len(x), L_j)`` of pdf or sf values of pool ``j``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([getattr(f, what)(x) for f in self._pools[j]], axis=-1)

    def _combine(self, tables):
        # tables[j]: (K, L_j) -> sum_n p_n prod_j tables[j][:, index[n, j]]
        prod = np.ones((tables[0].shape[0], self.nnz))
        for j, tab in enumerate(tables):
            prod *= tab[:, self._index[:, j]]
        return prod @ self._p

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[-1] != self.M:
            raise DimensionError(f"points must have {self.M} coordinates")
        if np.any(x < 0) or np.any(np.isnan(x)):
            raise DomainError("coordinates must be nonnegative")
        return x, scalar

    def density(self, x):
        x, scalar = self._points(x)
        out = self._combine([self._table(j, x[:, j], "pdf") for j in range(self.M)])
        return float(out[0]) if scalar else out

    def survival(self, z):
        z, scalar = self._points(z)
        out = self._combine([self._table(j, z[:, j], "sf") for j in range(self.M)])
        return float(out[0]) if scalar else out

    def with_weights(self, index, p, pools=None, labels=None):
        return MMEamModel(
            self._pools if pools is None else pools,
            index,
            p,
            labels=self._labels if labels is None else labels,
            check="none",
        )

    def marginal_weights(self, j):
        """Weights of pool ``j`` components in the marginal of coordinate ``j``."""
        w = np.zeros(len(self._pools[j]))
        np.add.at(w, self._index[:, j], self._p)
        return w

    def pair_weights(self, j1, j2):
        P = np.zeros((len(self._pools[j1]), len(self._pools[j2])))
        np.add.at(P, (self._index[:, j1], self._index[:, j2]), self._p)
        return P


def independence_model(marginals: Sequence[METriple | MEAffineMixture]) -> MMEamModel:
    """Product model; mixture marginals contribute their weights as factors."""
    pools, factors = [], []
    for m in marginals:
        pools.append(tuple(m.components))
        factors.append(np.asarray(m.weights, dtype=float))
    P = factors[0]
    for f in factors[1:]:
        P = np.multiply.outer(P, f)
    return MMEamModel.from_dense(pools, P, check="norm")


def joint_density(m: MMEamModel, x):
    return m.density(x)


def joint_survival(m: MMEamModel, z):
    return m.survival(z)


def marginalize(m: MMEamModel, keep: Sequence[int]) -> MMEamModel:
    """Joint law of the coordinates in ``keep`` (positions, in the given order)."""
    keep = [int(k) for k in keep]
    if not keep:
        raise DomainError("keep must be non-empty")
    if any(k < 0 or k >= m.M for k in keep) or len(set(keep)) != len(keep):
        raise DimensionError("invalid coordinate subset")
    if keep == list(range(m.M)):
        return m
    idx = m.index[:, keep]
    return MMEamModel([m.pools[k] for k in keep], idx, m.p, labels=[m.labels[k] for k in keep], check="none")


def marginal(m: MMEamModel, j: int) -> MEAffineMixture:
    """Univariate law of coordinate ``j`` as an affine mixture over its pool."""
    w = m.marginal_weights(j)
    nz = np.flatnonzero(w)
    return MEAffineMixture(w[nz], [m.pools[j][k] for k in nz], check="none")


def condition_on(m: MMEamModel, observed: Mapping[int, float]) -> MMEamModel:
    """Law of the unobserved coordinates given exact values of the observed ones."""
    obs = {int(k): float(v) for k, v in observed.items()}
    if not obs:
        return m
    if any(k < 0 or k >= m.M for k in obs):
        raise DimensionError("observed coordinate out of range")
    if any(v < 0 for v in obs.values()):
        raise DomainError("observed values must be nonnegative")
    rest = [j for j in range(m.M) if j not in obs]
    if not rest:
        raise DomainError("at least one coordinate must stay unobserved")
    q = m.p.copy()
    for j, v in obs.items():
        tab = m._table(j, [v], "pdf")[0]
        q = q * tab[m.index[:, j]]
    denom = q.sum()
    if not abs(denom) > 1e-300:
        raise DegenerateModelError("conditioning density vanishes at the observed point")
    return MMEamModel([m.pools[j] for j in rest], m.index[:, rest], q / denom,
                      labels=[m.labels[j] for j in rest], check="none")


def _moment_table(pool, r):
    return np.array([f.moment(r) for f in pool])


def cross_moment(m: MMEamModel, r: Sequence[int]) -> float:
    """``E[prod_j X_j^{r_j}]``."""
    r = [int(v) for v in r]
    if len(r) != m.M:
        raise DimensionError("one exponent per coordinate")
    prod = m.p.copy()
    for j, rj in enumerate(r):
        if rj:
            prod = prod * _moment_table(m.pools[j], rj)[m.index[:, j]]
    return float(prod.sum())


def _sf_table(pool, z):
    return np.array([f.sf(z) for f in pool])


def residual_lifetime(m: MMEamModel, z: Sequence[float], ctx=None) -> MMEamModel:
    """Law of ``X - z`` given ``X > z`` componentwise."""
    ctx = mc._ctx(ctx)
    z = np.asarray(z, dtype=float).ravel()
    if z.size != m.M:
        raise DimensionError("one threshold per coordinate")
    if np.any(z < 0):
        raise DomainError("thresholds must be nonnegative")
    if np.all(z == 0):
        return m
    w = m.p.copy()
    pools = []
    for j in range(m.M):
        pool = m.pools[j]
        if z[j] == 0:
            pools.append(pool)
            continue
        s = _sf_table(pool, z[j])
        w = w * s[m.index[:, j]]
        pools.append(tuple(md.residual(f, z[j], ctx) if sk > ctx.underflow else f for f, sk in zip(pool, s)))
    total = w.sum()
    if not total > ctx.underflow:
        raise UnderflowError(f"joint survival at z is {total:.3g}; the tail is numerically extinct")
    keep = w != 0.0
    return MMEamModel(pools, m.index[keep], w[keep] / total, labels=m.labels, check="none")


def residual_weights(m: MMEamModel, z, ctx=None):
    """Weights ``p^RL`` aligned with ``m.index`` and the joint survival at ``z``."""
    z = np.asarray(z, dtype=float).ravel()
    w = m.p.copy()
    for j in range(m.M):
        if z[j] > 0:
            w = w * _sf_table(m.pools[j], z[j])[m.index[:, j]]
    total = float(w.sum())
    return w, total


def esscher(m: MMEamModel, n: Sequence[int], lam: Sequence[float]):
    """Size-biased Esscher transform with weight ``prod_j x_j^{n_j} e^{-lam_j x_j}``.

    Returns ``(model, C)`` where ``C = E[prod_j X_j^{n_j} e^{-lam_j X_j}]``.
    """
    n = [int(v) for v in n]
    lam = [float(v) for v in lam]
    if len(n) != m.M or len(lam) != m.M:
        raise DimensionError("one (n, lambda) pair per coordinate")
    if any(v < 0 for v in n):
        raise DomainError("n must be nonnegative")
    for j in range(m.M):
        kmax = max(f.kappa for f in m.pools[j])
        if not lam[j] > kmax:
            raise DomainError(f"lambda_{j}={lam[j]} must exceed the largest spectral abscissa {kmax:.4g}")
    if all(v == 0 for v in n) and all(v == 0.0 for v in lam):
        return m, 1.0
    w = m.p.copy()
    pools = []
    for j in range(m.M):
        res = [md.esscher_size_biased(f, md.EsscherParams(n[j], lam[j])) for f in m.pools[j]]
        pools.append(tuple(r.triple for r in res))
        C = np.array([r.norm for r in res])
        w = w * C[m.index[:, j]]
    total = float(w.sum())
    if not total > 0:
        raise DomainError("Esscher normaliser is not positive")
    return MMEamModel(pools, m.index, w / total, labels=m.labels, check="none"), total


def equilibrium(m: MMEamModel, r: int) -> MMEamModel:
    """r-th order multivariate equilibrium law, density proportional to the
    (r-1)-th order joint survival function."""
    r = int(r)
    if r < 1:
        raise DomainError("order must be at least 1")
    w = m.p.copy()
    cache = {}
    pools = []
    for j in range(m.M):
        comps = []
        fac = np.empty(len(m.pools[j]))
        for k, f in enumerate(m.pools[j]):
            if id(f) not in cache:
                a, prod = md.equilibrium_chain(f, r)
                cache[id(f)] = (METriple(a, f.T, f.l, check="none"), prod)
            comps.append(cache[id(f)][0])
            fac[k] = cache[id(f)][1]
        pools.append(tuple(comps))
        w = w * fac[m.index[:, j]]
    return MMEamModel(pools, m.index, w / w.sum(), labels=m.labels, check="none")


def order_statistic(m: MMEamModel, j: int) -> MEAffineMixture:
    """Law of the j-th smallest coordinate (1-based ``j``)."""
    j = int(j)
    if not 1 <= j <= m.M:
        raise DomainError(f"order statistic index {j} out of range 1..{m.M}")
    cache = {}
    weights, comps = [], []
    for row, pw in zip(m.index, m.p):
        trs = [m.pools[c][row[c]] for c in range(m.M)]
        key = tuple(sorted(id(t) for t in trs))
        if key not in cache:
            cache[key] = md.order_stat_indep(trs, j)
        mix = cache[key]
        weights.extend(pw * np.asarray(mix.weights))
        comps.extend(mix.components)
    w = np.array(weights)
    return MEAffineMixture(w / w.sum(), comps, check="none")


def c_value(fa: METriple, fb: METriple) -> float:
    """``int_0^inf F_a(x) f_b(x) dx``."""
    K = mc.kron_sum(fa.T, fb.T)
    v = mc.neg_power_solve(K, np.kron(fa.l, fb.t), 1)
    return 1.0 - float(np.kron(fa.alpha, fb.alpha) @ v)


def c_table(pool: Sequence[METriple]) -> np.ndarray:
    """Matrix ``C[a, b] = int F_a f_b`` over a component pool."""
    L = len(pool)
    C = np.empty((L, L))
    for a in range(L):
        for b in range(L):
            C[a, b] = c_value(pool[a], pool[b])
    return C


def rank_corr(m: MMEamModel, j1: int, j2: int, kind: str = "kendall") -> float:
    """Kendall's tau, Spearman's rho or Pearson's correlation of ``(X_j1, X_j2)``.

    Both rank measures only depend on the bivariate marginal weights ``P``:
    tau = 4 <P, C1 P C2^T> - 1 and rho = 12 <P, (C1 u1)(C2 u2)^T> - 3 with
    ``u`` the univariate marginal weights.
    """
    kind = kind.lower()
    if kind not in ("kendall", "spearman", "pearson"):
        raise DomainError(f"unknown correlation kind {kind!r}")
    if j1 == j2:
        return 1.0
    if kind == "pearson":
        e = np.zeros(m.M, dtype=int)
        r1, r2, r12 = e.copy(), e.copy(), e.copy()
        r1[j1] = 1
        r2[j2] = 1
        r12[j1] = r12[j2] = 1
        m1, m2 = cross_moment(m, r1), cross_moment(m, r2)
        v1 = cross_moment(m, 2 * r1) - m1 ** 2
        v2 = cross_moment(m, 2 * r2) - m2 ** 2
        return (cross_moment(m, r12) - m1 * m2) / np.sqrt(v1 * v2)
    P = m.pair_weights(j1, j2)
    C1 = c_table(m.pools[j1])
    C2 = C1 if m.pools[j2] is m.pools[j1] else c_table(m.pools[j2])
    if kind == "kendall":
        return float(4.0 * np.sum(P * (C1 @ P @ C2.T)) - 1.0)
    u1, u2 = P.sum(axis=1), P.sum(axis=0)
    return float(12.0 * (C1 @ u1) @ P @ (C2 @ u2) - 3.0)

