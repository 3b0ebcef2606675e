"""Fitting a multivariate model from complete loss data.

Univariate ME marginals are supplied by the caller. Dependence is captured
by an empirical Bernstein copula whose mixing weights are the differenced
empirical joint distribution of the probability-transformed data, which
turns the fitted density into an MMEam with per-coordinate order-statistic
pools.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import medist as md
from .errors import DataValidationError, DomainError, InvariantError, ParseError
from .medist import MEAffineMixture, METriple
from .mmeam import MMEamModel

__all__ = [
    "Dataset",
    "BernsteinWeights",
    "ingest_csv",
    "empirical_zeta",
    "bernstein_phi",
    "phi_counts",
    "order_stat_pool",
    "assemble_mmeam",
    "calibrate",
    "fit_exponential",
    "fit_erlang",
]


@dataclass(frozen=True)
class Dataset:
    """``N`` complete observations of ``M`` nonnegative losses."""

    values: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise DataValidationError("dataset needs at least one row and one column")
        bad = np.argwhere(~np.isfinite(v) | (v < 0))
        if bad.size:
            r, c = (int(i) for i in bad[0])
            raise DataValidationError(f"invalid value {v[r, c]!r} at row {r + 1}, column {c + 1}", r + 1, c + 1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        cols = tuple(self.columns) or tuple(f"x{j + 1}" for j in range(v.shape[1]))
        if len(cols) != v.shape[1]:
            raise DataValidationError("one column name per column required")
        object.__setattr__(self, "columns", cols)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]


def ingest_csv(source) -> Dataset:
    """Read a comma-separated file with a header row.

    ``source`` is a path or a text stream. Rows and columns in error
    messages are 1-based and count data rows only.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return ingest_csv(fh)
    rows = [r for r in csv.reader(source) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataValidationError("empty file: a header row is required")
    header, body = [c.strip() for c in rows[0]], rows[1:]
    if not body:
        raise DataValidationError("no data rows")
    M = len(header)
    out = np.empty((len(body), M))
    for i, row in enumerate(body, start=1):
        if len(row) != M:
            raise ParseError(f"row {i} has {len(row)} fields, expected {M}", row=i)
        for j, cell in enumerate(row, start=1):
            cell = cell.strip()
            if not cell:
                raise DataValidationError(f"missing value at row {i}, column {j}", i, j)
            try:
                val = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r} at row {i}, column {j}", i, j) from None
            if not math.isfinite(val) or val < 0:
                raise DataValidationError(f"invalid value {cell!r} at row {i}, column {j}", i, j)
            out[i - 1, j - 1] = val
    return Dataset(out, tuple(header))


@dataclass(frozen=True)
class BernsteinWeights:
    """Empirical copula grid ``zeta(h/A) = counts[h] / N`` for ``h`` in ``{0..A}^M``.

    Counts are kept as integers so that differencing is exact.
    """

    A: int
    counts: np.ndarray
    N: int

    @property
    def zeta(self) -> np.ndarray:
        return self.counts / self.N

    @property
    def M(self) -> int:
        return self.counts.ndim


def _pseudo_obs(d: Dataset, marginals) -> np.ndarray:
    if len(marginals) != d.M:
        raise DataValidationError(f"{len(marginals)} marginals for {d.M} columns")
    return np.column_stack([np.asarray(f.cdf(d.values[:, j]), dtype=float) for j, f in enumerate(marginals)])


def empirical_zeta(d: Dataset, marginals: Sequence[METriple | MEAffineMixture], A: int = 4) -> BernsteinWeights:
    """Count observations with ``F_j(x_kj) <= h_j / A`` in every coordinate."""
    A = int(A)
    if A < 1:
        raise DomainError("order A must be at least 1")
    U = _pseudo_obs(d, marginals)
    levels = np.arange(A + 1) / A
    # smallest h with U <= h/A; values above 1 (rounding) never occur for a cdf
    bins = np.searchsorted(levels, U, side="left")
    bins = np.minimum(bins, A)
    shape = (A + 1,) * d.M
    flat = np.ravel_multi_index(tuple(bins.T), shape)
    counts = np.bincount(flat, minlength=(A + 1) ** d.M).reshape(shape)
    for ax in range(d.M):
        counts = np.cumsum(counts, axis=ax)
    return BernsteinWeights(A, counts.astype(np.int64), d.N)


def phi_counts(w: BernsteinWeights) -> np.ndarray:
    """Integer numerators ``N * phi[h]``: inclusion-exclusion on the count grid."""
    diff = np.asarray(w.counts)
    for ax in range(diff.ndim):
        diff = np.diff(diff, axis=ax)
    return diff


def bernstein_phi(w: BernsteinWeights, tol: float = 1e-12) -> np.ndarray:
    """Mixing weights ``phi[h]``, ``h`` in ``{0..A-1}^M``, by inclusion-exclusion on ``zeta``."""
    phi = phi_counts(w) / w.N
    if phi.min() < -tol:
        raise InvariantError(f"negative Bernstein weight {phi.min():.3g}: grid is not distribution-like")
    total = phi.sum()
    if abs(total - 1.0) > tol:
        # mass stuck on the lower boundary, e.g. observations with F = 0
        raise InvariantError(f"Bernstein weights sum to {float(total)!r}; some data have zero marginal probability")
    return phi


def order_stat_pool(f: METriple | MEAffineMixture, A: int) -> list[METriple]:
    """Triples of the ``h``-th smallest of ``A`` iid copies of ``f``, ``h = 1..A``."""
    f = md.mixture_to_triple(f)
    return [md.mixture_to_triple(md.order_stat_indep([f] * A, h)) for h in range(1, A + 1)]


def assemble_mmeam(marginals: Sequence[METriple | MEAffineMixture], phi, A: int, labels=None) -> MMEamModel:
    """MMEam with coordinate ``j`` drawing component ``h_j`` from the order statistics of marginal ``j``."""
    phi = np.asarray(phi, dtype=float)
    A = int(A)
    if phi.ndim != len(marginals) or any(s != A for s in phi.shape):
        raise DataValidationError(f"weight grid of shape {phi.shape} does not match M={len(marginals)}, A={A}")
    pools = [order_stat_pool(f, A) for f in marginals]
    idx = np.argwhere(phi != 0.0)
    return MMEamModel(pools, idx, phi[tuple(idx.T)], labels=labels)


def calibrate(data: Dataset, marginals: Sequence[METriple | MEAffineMixture], A: int = 4) -> MMEamModel:
    """Empirical Bernstein copula fit: data and fitted marginals to an MMEam."""
    w = empirical_zeta(data, marginals, A)
    phi = bernstein_phi(w)
    return assemble_mmeam(marginals, phi, A, labels=data.columns)


# -- moment matchers for the marginal step (convenience only)

def fit_exponential(x) -> METriple:
    """Exponential law with the sample mean."""
    x = np.asarray(x, dtype=float)
    mu = float(x.mean()) if x.size else 0.0
    if not mu > 0:
        raise DataValidationError("need a positive sample mean")
    return md.exponential(1.0 / mu)


def fit_erlang(x, max_shape: int = 50) -> METriple:
    """Erlang law matching the sample mean, shape from the squared coefficient of variation."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DataValidationError("need at least two observations")
    mu, var = float(x.mean()), float(x.var(ddof=1))
    if not mu > 0:
        raise DataValidationError("need a positive sample mean")
    k = 1 if var <= 0 else int(min(max_shape, max(1, round(mu * mu / var))))
    return md.erlang(k, k / mu)


def dataset_from_text(text: str) -> Dataset:
    return ingest_csv(io.StringIO(text))
