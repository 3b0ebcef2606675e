"""Dense linear-algebra kernels.

Matrix exponential, Kronecker algebra, powers of ``(-T)^{-1}`` and
holomorphic functions of matrices. Everything here is pure: inputs are
never modified and results are fresh arrays.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import reduce

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    IllConditionedError,
    SingularMatrixError,
)

__all__ = [
    "NumericContext",
    "DEFAULT_CONTEXT",
    "as_matrix",
    "expm",
    "expm_grid",
    "kron_prod",
    "kron_sum",
    "kron_prod_all",
    "kron_sum_all",
    "block_bidiagonal",
    "neg_matrix_power",
    "neg_power_solve",
    "spectral_abscissa",
    "holo_matrix_func",
]


@dataclass(frozen=True)
class NumericContext:
    """Tolerances used across the package.

    Every public routine that iterates or validates accepts ``ctx=None``,
    meaning :data:`DEFAULT_CONTEXT`.
    """

    # holomorphic matrix functions
    eig_cond_max: float = 1e6
    contour_nodes: int = 64
    contour_max_nodes: int = 4096
    contour_tol: float = 1e-10
    # distribution validation
    kappa_max: float = -1e-12
    norm_tol: float = 1e-9
    neg_tol: float = -1e-9
    grid_points: int = 512
    grid_span: float = 40.0
    weight_tol: float = 1e-12
    # root finding
    root_tol: float = 1e-10
    root_maxiter: int = 200
    # tails
    underflow: float = 1e-300

    def with_(self, **changes) -> "NumericContext":
        return replace(self, **changes)


DEFAULT_CONTEXT = NumericContext()


def _ctx(ctx):
    return DEFAULT_CONTEXT if ctx is None else ctx


def as_matrix(A, name="matrix", square=False, dtype=float):
    """Validate and return a 2-D finite array (read-only copy)."""
    arr = np.array(A, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _square(A, name="A"):
    arr = np.asarray(A)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def expm(A):
    """Matrix exponential by scaling and squaring with a degree-13 Padé approximant.

    Delegates to :func:`scipy.linalg.expm` (Al-Mohy & Higham 2009), which
    is the standard backward-stable algorithm of this family.
    """
    A = _square(A)
    if not np.all(np.isfinite(A)):
        raise DomainError("expm: non-finite entries")
    return sla.expm(A)


def expm_grid(T, xs, max_entries=2_000_000):
    """Stack of ``e^{T x}`` for every ``x`` in ``xs``, shape ``(len(xs), p, p)``.

    Evaluated in chunks through the batched scipy routine so that memory
    stays bounded for large representations.
    """
    T = _square(T)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    p = T.shape[0]
    out = np.empty((xs.size, p, p), dtype=np.result_type(T, float))
    step = max(1, int(max_entries // (p * p)))
    for s in range(0, xs.size, step):
        blk = xs[s:s + step]
        out[s:s + step] = sla.expm(blk[:, None, None] * T[None, :, :])
    return out


def kron_prod(A, B):
    """Kronecker product ``A ⊗ B``."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def kron_sum(A, B):
    """Kronecker sum ``A ⊕ B = A ⊗ I + I ⊗ B``."""
    A = _square(A, "A")
    B = _square(B, "B")
    return np.kron(A, np.eye(B.shape[0])) + np.kron(np.eye(A.shape[0]), B)


def kron_prod_all(mats):
    """Left-folded Kronecker product of a non-empty sequence (vectors allowed)."""
    return reduce(np.kron, mats)


def kron_sum_all(mats):
    return reduce(kron_sum, mats)


def block_bidiagonal(diag, upper):
    """Assemble a block upper-bidiagonal matrix.

    ``diag`` holds the square diagonal blocks, ``upper[k]`` is the block at
    position ``(k, k+1)`` and must have shape ``(n_k, n_{k+1})``.
    """
    sizes = [d.shape[0] for d in diag]
    if len(upper) != len(diag) - 1:
        raise DimensionError("need exactly len(diag) - 1 off-diagonal blocks")
    offs = np.concatenate([[0], np.cumsum(sizes)])
    out = np.zeros((offs[-1], offs[-1]), dtype=np.result_type(*diag, *upper) if upper else diag[0].dtype)
    for k, D in enumerate(diag):
        out[offs[k]:offs[k + 1], offs[k]:offs[k + 1]] = D
    for k, U in enumerate(upper):
        if U.shape != (sizes[k], sizes[k + 1]):
            raise DimensionError(f"off-diagonal block {k} has shape {U.shape}")
        out[offs[k]:offs[k + 1], offs[k + 1]:offs[k + 2]] = U
    return out


def _lu_neg(T):
    T = _square(T, "T")
    with np.errstate(all="ignore"), warnings.catch_warnings():
        # singularity is diagnosed below from the pivots
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(-T, check_finite=True)
    diag = np.abs(np.diag(lu[0]))
    scale = max(np.abs(T).max(), 1.0)
    if diag.min() <= scale * T.shape[0] * np.finfo(float).eps:
        raise SingularMatrixError("-T is singular")
    return lu


def neg_matrix_power(T, r):
    """Return ``(-T)^{-r}`` using a single LU factorisation of ``-T``."""
    r = int(r)
    if r < 0:
        raise DomainError("r must be nonnegative")
    T = _square(T, "T")
    out = np.eye(T.shape[0])
    if r == 0:
        return out
    lu = _lu_neg(T)
    for _ in range(r):
        out = sla.lu_solve(lu, out)
    return out


def neg_power_solve(T, v, r):
    """Return ``(-T)^{-r} v`` for a vector or matrix right-hand side."""
    v = np.asarray(v, dtype=np.result_type(v, float))
    if r == 0:
        return v.copy()
    lu = _lu_neg(T)
    for _ in range(int(r)):
        v = sla.lu_solve(lu, v)
    return v


def spectral_abscissa(A):
    """Largest real part among the eigenvalues of ``A``."""
    A = _square(A)
    try:
        ev = sla.eigvals(A)
    except sla.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(ev.real))


def _maybe_real(F, A):
    if np.iscomplexobj(A):
        return F
    scale = max(np.linalg.norm(F), 1e-300)
    if np.linalg.norm(F.imag) <= 1e-9 * scale:
        return F.real.copy()
    return F


def _eigen_apply(g, A, ctx):
    ev, Z = np.linalg.eig(A)
    cond = np.linalg.cond(Z)
    if not np.isfinite(cond) or cond > ctx.eig_cond_max:
        raise IllConditionedError(f"eigenvector condition number {cond:.3g} exceeds {ctx.eig_cond_max:.3g}")
    gv = np.asarray(g(ev.astype(complex)), dtype=complex)
    return (Z * gv) @ np.linalg.inv(Z)


def _contour_circle(ev, domain_re_min):
    re = ev.real
    mid = 0.5 * float(re.min() + re.max())
    if domain_re_min is None:
        spread = float(np.max(np.abs(ev - mid)))
        return mid, 1.5 * spread + 1.0
    # The trapezoidal error decays like (rho_in / rho_out)^(N/2) for the radius
    # sqrt(rho_in * rho_out), where rho_in encloses the spectrum and rho_out
    # reaches the singular half-plane. Pick the centre maximising that ratio.
    width = float(re.max() - re.min()) + float(np.max(np.abs(ev.imag))) + 1.0
    best = None
    for c in mid + width * np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 121)]):
        rho_in = max(float(np.max(np.abs(ev - c))), 1e-12)
        rho_out = c - domain_re_min
        q = rho_out / rho_in
        if best is None or q > best[0]:
            best = (q, c, rho_in, rho_out)
    q, c, rho_in, rho_out = best
    if q < 1.02:
        raise DomainError("spectrum is too close to the singular region for a contour integral")
    # a (nearly) defective spectrum collapses to a point while its resolvent
    # stays large nearby, so keep the circle well away from it
    return c, float(np.sqrt(max(rho_in, 0.25 * rho_out) * rho_out))


def _contour_apply(g, A, ctx, domain_re_min):
    n = A.shape[0]
    ev = np.linalg.eigvals(A)
    if domain_re_min is not None and np.any(ev.real <= domain_re_min):
        raise DomainError("spectrum lies outside the analyticity region of g")
    center, radius = _contour_circle(ev, domain_re_min)
    eye = np.eye(n)

    def node_sum(theta):
        w = radius * np.exp(1j * theta)
        z = center + w
        gz = np.asarray(g(z), dtype=complex)
        acc = np.zeros((n, n), dtype=complex)
        for zk, gk, wk in zip(z, gz, w):
            acc += (gk * wk) * np.linalg.solve(zk * eye - A, eye)
        return acc

    N = ctx.contour_nodes
    total = node_sum(2 * np.pi * np.arange(N) / N)
    F = total / N
    while True:
        if 2 * N > ctx.contour_max_nodes:
            raise ConvergenceError(f"contour integral not converged with {N} nodes")
        # refine: the 2N-node rule reuses the N existing nodes
        total = total + node_sum(2 * np.pi * (np.arange(N) + 0.5) / N)
        N *= 2
        F_new = total / N
        denom = max(np.linalg.norm(F_new), 1e-300)
        if np.linalg.norm(F_new - F) <= ctx.contour_tol * denom:
            return F_new
        F = F_new


def holo_matrix_func(g, A, method="auto", *, domain_re_min=None, ctx=None):
    """Evaluate ``g(A)`` for a function ``g`` holomorphic near the spectrum of ``A``.

    Parameters
    ----------
    g : callable
        Vectorised scalar function accepting a complex ndarray.
    A : array_like, square
    method : {"auto", "eigen", "contour"}
        ``eigen`` diagonalises ``A`` and raises :class:`IllConditionedError`
        when the eigenvector basis is too ill-conditioned. ``contour`` uses the
        trapezoidal rule for the Cauchy integral over a circle around the
        spectrum, doubling the node count until two successive values agree.
        ``auto`` tries ``eigen`` first and falls back to ``contour``.
    domain_re_min : float, optional
        ``g`` is only known to be analytic on ``Re z > domain_re_min``.
    """
    ctx = _ctx(ctx)
    A = _square(A)
    if not np.all(np.isfinite(A)):
        raise DomainError("non-finite matrix")
    if domain_re_min is not None:
        ev = np.linalg.eigvals(A)
        if np.any(ev.real <= domain_re_min):
            raise DomainError("spectrum lies outside the analyticity region of g")
    if method == "eigen":
        return _maybe_real(_eigen_apply(g, A, ctx), A)
    if method == "contour":
        return _maybe_real(_contour_apply(g, A, ctx, domain_re_min), A)
    if method != "auto":
        raise DomainError(f"unknown method {method!r}")
    try:
        return _maybe_real(_eigen_apply(g, A, ctx), A)
    except IllConditionedError:
        return _maybe_real(_contour_apply(g, A, ctx, domain_re_min), A)


def factorial(n):
    return float(math.factorial(int(n)))
