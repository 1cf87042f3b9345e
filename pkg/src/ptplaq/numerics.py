"""Dense complex linear algebra for matrices up to 16x16.

Self-contained kernels: eigenvalues via balanced Hessenberg QR with
Wilkinson shifts (dispatched to the compiled or pure backend), linear
solves via partially pivoted LU with one step of iterative refinement,
and numerical rank via column-pivoted Householder QR. NumPy is used as
the array container only; no LAPACK-backed numpy.linalg calls appear on
these paths.
"""

from __future__ import annotations

import numpy as np

from ptplaq import kernels

MAX_DIM = 16
DEFAULT_TOL = 1e-10


class DimensionError(ValueError):
    """Input matrix has the wrong shape or exceeds the supported size."""


class ConvergenceError(RuntimeError):
    """An iteration failed to converge; carries the last residual if known."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class SingularMatrixError(RuntimeError):
    """Matrix singular to working tolerance; carries a condition indicator."""

    def __init__(self, message, condition_indicator=None):
        super().__init__(message)
        self.condition_indicator = condition_indicator


class ToleranceError(RuntimeError):
    """A tolerance-based consistency check failed (e.g. rank monotonicity)."""


def _as_matrix(m, square=True) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={a.ndim}")
    if square and a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if max(a.shape, default=0) > MAX_DIM:
        raise DimensionError(f"matrix dimension {a.shape} exceeds {MAX_DIM}")
    if not (np.all(np.isfinite(a.real)) and np.all(np.isfinite(a.imag))):
        raise ValueError("matrix entries must be finite")
    return a


def sort_spectrum(values) -> np.ndarray:
    """Sort eigenvalues lexicographically by (real part, imaginary part)."""
    w = np.asarray(values, dtype=np.complex128)
    order = np.lexsort((w.imag, w.real))
    return w[order]


def eig_complex(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """All eigenvalues of a square complex matrix, sorted by (Re, Im).

    The backend runs balancing, Householder reduction to Hessenberg form and
    shifted QR with Wilkinson shifts; the sweep budget is 100*n^2. ``tol``
    scales the trace cross-check applied to the result.
    """
    a = _as_matrix(m)
    n = a.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.complex128)
    try:
        w = kernels.eigvals(a, 100 * n * n)
    except RuntimeError as exc:
        raise ConvergenceError(str(exc)) from exc
    scale = matrix_norm(a)
    if scale > 0.0:
        trace_err = abs(w.sum() - np.trace(a))
        if trace_err > max(tol, 1e3 * n * np.finfo(float).eps) * scale:
            raise ConvergenceError(
                f"eigenvalue sum drifted from trace by {trace_err:.3e}",
                last_residual=trace_err)
    return sort_spectrum(w)


def matrix_norm(m) -> float:
    """Frobenius norm."""
    a = np.asarray(m, dtype=np.complex128)
    return float(np.sqrt((a.real * a.real + a.imag * a.imag).sum()))


def _lu_factor(a: np.ndarray):
    """LU with partial pivoting, in place on a copy; returns (lu, piv)."""
    lu = a.copy()
    n = lu.shape[0]
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        pivot = lu[k, k]
        if pivot != 0.0:
            lu[k + 1:, k] /= pivot
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, piv


def _lu_solve(lu: np.ndarray, piv: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    x = b[piv].astype(np.complex128)
    for k in range(1, n):
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - lu[k, k + 1:] @ x[k + 1:]) / lu[k, k]
    return x


def solve_linear(m, b) -> np.ndarray:
    """Solve M x = b for a numerically nonsingular square M.

    Raises SingularMatrixError (with a pivot-ratio condition indicator) when
    any LU pivot falls at or below 1e-12 * ||M||.
    """
    a = _as_matrix(m)
    rhs = np.asarray(b, dtype=np.complex128)
    if rhs.shape != (a.shape[0],):
        raise DimensionError(f"rhs shape {rhs.shape} does not match matrix {a.shape}")
    scale = matrix_norm(a)
    lu, piv = _lu_factor(a)
    diag = np.abs(np.diag(lu))
    if diag.min(initial=np.inf) <= 1e-12 * scale or scale == 0.0:
        cond = float(diag.max(initial=0.0) / max(diag.min(initial=0.0), 1e-300))
        raise SingularMatrixError(
            f"matrix singular to tolerance 1e-12*||M|| (pivot ratio {cond:.3e})",
            condition_indicator=cond)
    x = _lu_solve(lu, piv, rhs)
    # one step of iterative refinement tightens the residual at no real cost
    r = rhs - a @ x
    x = x + _lu_solve(lu, piv, r)
    return x


def _cpqr_pivots(a: np.ndarray) -> np.ndarray:
    """|R_ii| sequence from Householder QR with column pivoting."""
    r = a.copy()
    m, n = r.shape
    steps = min(m, n)
    pivots = np.zeros(steps)
    col_norms = (np.abs(r) ** 2).sum(axis=0)
    for k in range(steps):
        j = k + int(np.argmax(col_norms[k:]))
        if j != k:
            r[:, [k, j]] = r[:, [j, k]]
            col_norms[[k, j]] = col_norms[[j, k]]
        x = r[k:, k]
        xnorm = np.sqrt(np.vdot(x, x).real)
        pivots[k] = xnorm
        if xnorm == 0.0:
            break
        a0 = x[0]
        alpha = -(a0 / abs(a0)) * xnorm if a0 != 0.0 else -xnorm
        v = x.copy()
        v[0] = a0 - alpha
        vnorm = np.sqrt(np.vdot(v, v).real)
        if vnorm == 0.0:
            continue
        v /= vnorm
        r[k:, k:] -= 2.0 * np.outer(v, v.conj() @ r[k:, k:])
        r[k, k] = alpha
        r[k + 1:, k] = 0.0
        # recompute trailing column norms directly; cheap at these sizes
        col_norms[k + 1:] = (np.abs(r[k:, k + 1:]) ** 2).sum(axis=0)
    return pivots


def numerical_rank(m, tol: float = DEFAULT_TOL) -> int:
    """Rank as the number of CPQR pivot magnitudes above tol * (largest pivot)."""
    a = _as_matrix(m, square=False)
    if a.size == 0:
        return 0
    pivots = _cpqr_pivots(a)
    top = pivots.max(initial=0.0)
    if top == 0.0:
        return 0
    return int((pivots > tol * top).sum())


def match_spectra(w1, w2) -> float:
    """Greedy assignment distance between two eigenvalue multisets.

    Returns the largest pairing error; inputs must have equal length.
    """
    a = list(np.asarray(w1, dtype=np.complex128))
    b = list(np.asarray(w2, dtype=np.complex128))
    if len(a) != len(b):
        raise DimensionError("spectra have different lengths")
    worst = 0.0
    for z in a:
        j = min(range(len(b)), key=lambda i: abs(z - b[i]))
        worst = max(worst, abs(z - b.pop(j)))
    return worst
