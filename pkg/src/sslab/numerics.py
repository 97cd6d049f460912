"""Dense linear algebra and fixed-step integration shared by the physics modules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from sslab.errors import NumericalError

DEFECTIVE_THRESHOLD = 1e8


@dataclass(frozen=True)
class GeneralEigenSystem:
    """Eigenvalues with right vectors (columns) and biorthonormal left vectors (rows).

    ``left @ right`` is the identity when the decomposition is not flagged.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    condition_estimate: float

    @property
    def flagged(self) -> bool:
        return not (self.condition_estimate < DEFECTIVE_THRESHOLD)

    def reconstruct(self) -> np.ndarray:
        return (self.right_vectors * self.eigenvalues[None, :]) @ self.left_vectors


def sort_order(eigenvalues: np.ndarray, tie_tol: float = 1e-10) -> np.ndarray:
    """Indices sorting by descending real part, ties broken by descending imaginary part."""
    ev = np.asarray(eigenvalues)
    scale = max(1.0, float(np.max(np.abs(ev), initial=0.0)))
    # bucket real parts so round-off does not break conjugate-pair ties
    bucket = np.round(ev.real / (tie_tol * scale))
    return np.lexsort((-ev.imag, -bucket))


def eig_general(m: np.ndarray) -> GeneralEigenSystem:
    """Full eigen-decomposition of a general complex square matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix has non-finite entries")
    try:
        vals, vl, vr = scipy.linalg.eig(m, left=True, right=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigen-decomposition failed to converge: {exc}") from exc
    order = sort_order(vals)
    vals, vl, vr = vals[order], vl[:, order], vr[:, order]
    vr = vr / np.linalg.norm(vr, axis=0)[None, :]
    cond = math.inf
    left = None
    try:
        lu = scipy.linalg.lu_factor(vr, check_finite=False)
        left = scipy.linalg.lu_solve(lu, np.eye(vr.shape[0], dtype=complex), check_finite=False)
        if np.all(np.isfinite(left)):
            cond = float(np.linalg.norm(vr, 1) * np.linalg.norm(left, 1))
        else:
            left = None
    except (np.linalg.LinAlgError, ValueError, scipy.linalg.LinAlgWarning):
        left = None
    if left is None or not cond < DEFECTIVE_THRESHOLD:
        # near-defective: fall back to LAPACK left vectors scaled pairwise
        overlaps = np.einsum("ij,ij->j", vl.conj(), vr)
        safe = np.where(np.abs(overlaps) > 0, overlaps, 1.0)
        left = (vl.conj() / safe[None, :]).T
        if not math.isfinite(cond):
            cond = math.inf
    return GeneralEigenSystem(eigenvalues=vals, right_vectors=vr, left_vectors=left, condition_estimate=cond)


@dataclass(frozen=True)
class OdeSettings:
    step: float = 1e-3
    t_max: float = 1.0

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("step must be positive")


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_ode(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0,
    settings: OdeSettings,
    t_eval: Sequence[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Classical fixed-step RK4 integration.

    Returns ``(times, states)``. Without ``t_eval`` every step on [0, t_max]
    is returned; otherwise each interval between consecutive sample times is
    split into equal sub-steps no longer than ``settings.step``.
    """
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    if t_eval is None:
        n = max(1, int(math.ceil(settings.t_max / settings.step - 1e-9)))
        times = np.linspace(0.0, settings.t_max, n + 1)
    else:
        times = np.asarray(t_eval, dtype=float)
        if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0):
            raise ValueError("t_eval must be a non-empty ascending sequence")
    out = np.empty((times.size,) + y.shape, dtype=y.dtype)
    out[0] = y
    t = float(times[0])
    for i in range(1, times.size):
        span = times[i] - times[i - 1]
        n_sub = max(1, int(math.ceil(span / settings.step - 1e-9))) if span > 0 else 0
        h = span / n_sub if n_sub else 0.0
        for k in range(n_sub):
            y = rk4_step(f, t, y, h)
            t = times[i - 1] + (k + 1) * h
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state encountered at t={times[i]:.6g}")
        out[i] = y
    return times, out


def kernel_basis(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal columns spanning the numerical null space of ``m``.

    A vector is in the kernel when its singular value is below ``tol`` times
    the spectral norm of ``m``.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    _, s, vh = scipy.linalg.svd(m)
    norm = s[0] if s.size else 0.0
    if norm == 0.0:
        return np.eye(m.shape[1], dtype=np.result_type(m.dtype, float))
    keep = s < tol * norm
    return vh[keep].conj().T


def to_sparse(m) -> scipy.sparse.csc_matrix:
    return m.tocsc() if scipy.sparse.issparse(m) else scipy.sparse.csc_matrix(m)


def eigs_near(m, sigma: complex, k: int = 12, tol: float = 1e-12) -> np.ndarray:
    """Eigenvalues of a sparse matrix nearest to ``sigma`` (shift-invert Arnoldi)."""
    a = to_sparse(m).astype(complex)
    k = min(k, a.shape[0] - 2)
    if k < 1:
        return np.linalg.eigvals(a.toarray())
    try:
        vals = scipy.sparse.linalg.eigs(a, k=k, sigma=sigma, which="LM", tol=tol, return_eigenvectors=False)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise NumericalError(f"shift-invert Arnoldi did not converge near {sigma}") from exc
    return vals[sort_order(vals)]


def null_vector_with_trace(m, trace_row: np.ndarray) -> np.ndarray:
    """Solve ``m x = 0`` with the normalisation ``trace_row . x = 1`` (sparse LU).

    Assumes a one-dimensional kernel; one equation is swapped for the
    normalisation constraint.
    """
    a = to_sparse(m).tolil(copy=True).astype(complex)
    row = int(np.argmax(np.abs(trace_row)))
    a[row, :] = trace_row[None, :]
    rhs = np.zeros(a.shape[0], dtype=complex)
    rhs[row] = 1.0
    try:
        x = scipy.sparse.linalg.spsolve(a.tocsc(), rhs)
    except RuntimeError as exc:
        raise NumericalError(f"singular steady-state system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericalError("steady-state solve produced non-finite entries (kernel not one-dimensional?)")
    return x
