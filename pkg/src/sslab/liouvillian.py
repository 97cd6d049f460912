"""Lindblad generator of the driven spin model, its spectrum and symmetry checks.

Superoperators act on column-stacked density matrices,
vec(A X B) = (B^T kron A) vec(X).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse

from sslab import numerics
from sslab.errors import ContractViolation, InvalidParameterError, NumericalError
from sslab.params import ModelParams
from sslab.spin_algebra import (
    build_spin_operators,
    check_density_matrix,
    jump_operator,
)

VECTORIZATION = "column-stacking"
MAX_SPINS = 200
# dense (N+1)^2 x (N+1)^2 matrices beyond this size exhaust desk-scale memory
MAX_DENSE_SPINS = 60
ZERO_TOL = 1e-9


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    dim = dim or math.isqrt(v.size)
    return v.reshape(dim, dim, order="F")


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray | scipy.sparse.spmatrix
    params: ModelParams
    kind: str = "full"
    counting_field: complex = 0.0
    vectorization: str = VECTORIZATION

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def hilbert_dim(self) -> int:
        return math.isqrt(self.dim)

    @property
    def is_sparse(self) -> bool:
        return scipy.sparse.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def sparse(self) -> scipy.sparse.csc_matrix:
        return numerics.to_sparse(self.matrix)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.hilbert_dim)

    def norm(self) -> float:
        if self.is_sparse:
            return float(scipy.sparse.linalg.norm(self.matrix))
        return float(np.linalg.norm(self.matrix))


def lindblad_generator(
    hamiltonian: np.ndarray,
    jumps: Iterable[tuple[float, np.ndarray]],
    jump_weight: float = 1.0,
    sparse: bool = False,
):
    """Matrix of X -> -i[H, X] + sum_k r_k (2 w O X O^+ - {O^+ O, X}).

    ``jump_weight`` w multiplies only the recycling term (counting field e^s).
    """
    if sparse:
        eye = scipy.sparse.identity(hamiltonian.shape[0], dtype=complex, format="csr")
        kron = scipy.sparse.kron
        as_mat = lambda a: scipy.sparse.csr_matrix(a)  # noqa: E731
    else:
        eye = np.eye(hamiltonian.shape[0], dtype=complex)
        kron = np.kron
        as_mat = np.asarray
    h = as_mat(hamiltonian)
    gen = -1j * (kron(eye, h) - kron(h.T, eye))
    for rate, op in jumps:
        if rate == 0:
            continue
        o = as_mat(op)
        odo = as_mat(op.conj().T @ op)
        gen = gen + rate * (2 * jump_weight * kron(o.conj(), o) - kron(eye, odo) - kron(odo.T, eye))
    return gen.tocsr() if sparse else gen


def _check_size(params: ModelParams, sparse: bool, max_spins: int) -> None:
    if params.n_spins > max_spins:
        raise InvalidParameterError(f"N={params.n_spins} exceeds the configured maximum {max_spins}")
    if not sparse and params.n_spins > MAX_DENSE_SPINS:
        raise InvalidParameterError(
            f"dense superoperator for N={params.n_spins} is too large; pass sparse=True"
        )


def build_liouvillian(
    params: ModelParams, sparse: bool = False, max_spins: int = MAX_SPINS, counting_field: complex = 0.0
) -> Superoperator:
    """Generator of d rho/dt = -i Omega [S_x, rho] + Gamma/(2J) (2 D rho D^+ - {D^+ D, rho}).

    A nonzero ``counting_field`` s weights the jump term by e^s (tilted
    generator); complex s gives the characteristic-function generator.
    """
    _check_size(params, sparse, max_spins)
    ops = build_spin_operators(params)
    d = jump_operator(params, ops)
    mat = lindblad_generator(
        params.omega * ops.sx,
        [(params.gamma / (2 * params.j), d)],
        jump_weight=np.exp(counting_field),
        sparse=sparse,
    )
    kind = "tilted" if counting_field != 0.0 else "full"
    return Superoperator(matrix=mat, params=params, kind=kind, counting_field=counting_field)


def build_rwa_liouvillian(params: ModelParams, sparse: bool = False, max_spins: int = MAX_SPINS) -> Superoperator:
    """Rotating-wave generator: S_x dephasing at Gamma_theta/2J plus x-ladder jumps.

    With the half-normalised ladders (S_z +- i S_y)/2 the ladder rate is
    chi_theta/2J; this is what the closed-form spectrum requires.
    """
    _check_size(params, sparse, max_spins)
    ops = build_spin_operators(params)
    j = params.j
    mat = lindblad_generator(
        params.omega * ops.sx,
        [
            (params.gamma_theta / (2 * j), ops.sx),
            (params.chi_theta / (2 * j), ops.sx_plus),
            (params.chi_theta / (2 * j), ops.sx_minus),
        ],
        sparse=sparse,
    )
    return Superoperator(matrix=mat, params=params, kind="rwa")


def evolve_density(
    liouvillian: Superoperator, rho0: np.ndarray, t_grid: Sequence[float], step: float = 1e-3
) -> np.ndarray:
    """Density matrices at ``t_grid`` from fixed-step RK4, shape (len(t_grid), d, d)."""
    rho0 = check_density_matrix(rho0)
    mat = liouvillian.matrix
    times, ys = numerics.integrate_ode(
        lambda t, y: mat @ y, vec(rho0), numerics.OdeSettings(step=step, t_max=float(t_grid[-1])), t_eval=t_grid
    )
    d = rho0.shape[0]
    return ys.reshape(len(times), d, d).transpose(0, 2, 1)


@dataclass
class LiouvillianSpectrum:
    """Biorthonormal spectral decomposition, Tr[left[mu] @ right[nu]] = delta."""

    eigenvalues: np.ndarray
    right: np.ndarray  # (n, d, d)
    left: np.ndarray  # (n, d, d)
    zero_tol: float
    condition_estimate: float
    warnings: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return not (self.condition_estimate < numerics.DEFECTIVE_THRESHOLD)

    @property
    def zero_real_mask(self) -> np.ndarray:
        return np.abs(self.eigenvalues.real) <= self.zero_tol

    @property
    def steady_mask(self) -> np.ndarray:
        return np.abs(self.eigenvalues) <= self.zero_tol

    @property
    def n_steady(self) -> int:
        return int(np.count_nonzero(self.steady_mask))

    @property
    def steady_degenerate(self) -> bool:
        return self.n_steady > 1

    def coefficient(self, mu: int, x: np.ndarray) -> complex:
        return complex(np.trace(self.left[mu] @ x))

    def to_csv(self, path: str | Path, weights: Sequence[float] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["re_lambda", "im_lambda"] + (["weight_L_mu"] if weights is not None else [])
            w.writerow(header)
            for i, lam in enumerate(self.eigenvalues):
                row = [f"{lam.real:.12g}", f"{lam.imag:.12g}"]
                if weights is not None:
                    row.append(f"{weights[i]:.12g}")
                w.writerow(row)


def liouvillian_spectrum(liouvillian: Superoperator, zero_tol: float = ZERO_TOL) -> LiouvillianSpectrum:
    """Eigenvalues and left/right eigenmatrices sorted by descending real part."""
    mat = liouvillian.dense()
    if not np.all(np.isfinite(mat)):
        raise NumericalError("Liouvillian has non-finite entries")
    eig = numerics.eig_general(mat)
    d = liouvillian.hilbert_dim
    vals = eig.eigenvalues
    right_vecs = eig.right_vectors
    left_vecs = eig.left_vectors
    notes: list[str] = []
    steady = np.flatnonzero(np.abs(vals) <= zero_tol)
    if eig.flagged:
        notes.append(
            f"eigenvector matrix is ill-conditioned (estimate {eig.condition_estimate:.3g}); "
            "zero-real-part classification is unreliable"
        )
    if steady.size > 1:
        # biorthonormalise inside the degenerate kernel explicitly
        rk = right_vecs[:, steady]
        wk = left_vecs[steady, :]
        gram = wk @ rk
        try:
            wk = np.linalg.solve(gram, wk)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("steady-state branch is defective") from exc
        left_vecs = left_vecs.copy()
        left_vecs[steady, :] = wk
    right = np.stack([unvec(right_vecs[:, k], d) for k in range(vals.size)])
    # Tr[A X] = vec(A^T) . vec(X)
    left = np.stack([unvec(left_vecs[k, :], d).T for k in range(vals.size)])
    spec = LiouvillianSpectrum(
        eigenvalues=vals,
        right=right,
        left=left,
        zero_tol=zero_tol,
        condition_estimate=eig.condition_estimate,
        warnings=notes,
    )
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return spec


def adr(spectrum: LiouvillianSpectrum) -> float:
    """Asymptotic decay rate |Re lambda_1| (second eigenvalue in the sorted order).

    A degenerate steady branch gives exactly zero; check
    ``spectrum.steady_degenerate`` to tell that case apart.
    """
    if spectrum.eigenvalues.size < 2:
        return 0.0
    lam1 = spectrum.eigenvalues[1]
    if abs(lam1) <= spectrum.zero_tol:
        return 0.0
    return abs(float(lam1.real))


def adr_sparse(params: ModelParams, shifts: Sequence[complex] | None = None, k: int = 12) -> float:
    """ADR from shift-invert Arnoldi on the sparse generator.

    The default shifts sit just right of the origin and of +i Omega, where the
    slowest real and oscillating branches live.
    """
    lv = build_liouvillian(params, sparse=True)
    eps = 1e-3 * params.gamma
    if shifts is None:
        shifts = [eps] + ([eps + 1j * params.omega] if params.omega > 0 else [])
    found = np.concatenate([numerics.eigs_near(lv.matrix, s, k=k) for s in shifts])
    found = found[numerics.sort_order(found)]
    nonzero = found[np.abs(found) > ZERO_TOL]
    n_zero = found.size - nonzero.size
    if n_zero > len(shifts):  # several distinct zero eigenvalues: degenerate kernel
        return 0.0
    return abs(float(nonzero[0].real)) if nonzero.size else 0.0


def asymptotic_decay_rate(params: ModelParams, dense_max_spins: int = 30) -> float:
    """ADR choosing the dense route for small N and shift-invert otherwise."""
    if params.n_spins <= dense_max_spins:
        return adr(liouvillian_spectrum(build_liouvillian(params)))
    return adr_sparse(params)


def steady_state_projection(spectrum: LiouvillianSpectrum, rho0: np.ndarray) -> np.ndarray:
    """Long-time limit sum over the steady branch of Tr[rho_L rho0] rho_R."""
    rho0 = check_density_matrix(rho0)
    idx = np.flatnonzero(spectrum.steady_mask)
    if idx.size == 0:
        raise NumericalError("spectrum has no steady branch")
    gram = np.einsum("aij,bji->ab", spectrum.left[idx], spectrum.right[idx])
    if not np.allclose(gram, np.eye(idx.size), atol=1e-6):
        raise NumericalError("steady branch is not biorthonormal (defective)")
    coeffs = np.einsum("aij,ji->a", spectrum.left[idx], rho0)
    return np.einsum("a,aij->ij", coeffs, spectrum.right[idx])


def steady_state(params: ModelParams) -> np.ndarray:
    """Unique steady state from a sparse linear solve (valid away from the strong-symmetry point)."""
    if params.is_strong_symmetry_point:
        raise InvalidParameterError("steady state is not unique at theta = pi/4; use steady_state_projection")
    lv = build_liouvillian(params, sparse=True)
    d = params.dim
    x = numerics.null_vector_with_trace(lv.matrix, vec(np.eye(d)).astype(complex))
    rho = unvec(x, d)
    return 0.5 * (rho + rho.conj().T)


def rwa_eigenvalues(params: ModelParams, q: int, k: int, sign: int = 1) -> complex:
    """Closed-form rotating-wave eigenvalue lambda_{q,k}^{sign}."""
    n = params.n_spins
    if not (0 <= q <= n) or not (0 <= k <= n - q):
        raise InvalidParameterError(f"indices out of range: q={q}, k={k} for 2J={n}")
    if sign not in (1, -1):
        raise InvalidParameterError("sign must be +1 or -1")
    j = params.j
    return complex(
        sign * 1j * q * params.omega
        - params.gamma_theta / (2 * j) * q**2
        - params.chi_theta / (4 * j) * (q + k * (1 + k + 2 * q))
    )


def rwa_spectrum(params: ModelParams) -> np.ndarray:
    """All closed-form rotating-wave eigenvalues (both signs for q > 0)."""
    out = []
    for q in range(params.n_spins + 1):
        for k in range(params.n_spins - q + 1):
            out.append(rwa_eigenvalues(params, q, k, 1))
            if q > 0:
                out.append(rwa_eigenvalues(params, q, k, -1))
    return np.array(out)


def rwa_eigenstate(params: ModelParams, q: int) -> np.ndarray:
    """(S_x^+)^q acting on the maximally mixed state.

    q = 0 is returned trace-normalised; q > 0 (traceless) with unit Frobenius norm.
    """
    if q < 0:
        raise InvalidParameterError("q must be non-negative")
    if q > params.n_spins:
        raise InvalidParameterError(f"(S_x^+)^{q} vanishes for 2J={params.n_spins}")
    ops = build_spin_operators(params)
    d = params.dim
    rho = np.linalg.matrix_power(ops.sx_plus, q) @ (np.eye(d) / d)
    if q == 0:
        return rho
    return rho / np.linalg.norm(rho)


@dataclass(frozen=True)
class SymmetryReport:
    hamiltonian_residual: float
    jump_residual: float
    jump_dagger_residual: float
    is_symmetry: bool
    trivial: bool = False


def _fro(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def _check_operator(a: np.ndarray, params: ModelParams) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.shape != (params.dim, params.dim):
        raise ContractViolation(f"operator must be {params.dim}x{params.dim}")
    return a


def check_strong_symmetry(a: np.ndarray, params: ModelParams, tol: float = 1e-10) -> SymmetryReport:
    """Does ``a`` commute with both H = Omega S_x and the jump operator?"""
    a = _check_operator(a, params)
    ops = build_spin_operators(params)
    h = params.omega * ops.sx
    d = jump_operator(params, ops)
    norm_a = _fro(a)
    rh = _fro(h @ a - a @ h)
    rd = _fro(d @ a - a @ d)
    if norm_a == 0.0:
        return SymmetryReport(rh, rd, 0.0, True, trivial=True)
    return SymmetryReport(rh, rd, 0.0, bool(rh < tol * norm_a and rd < tol * norm_a))


def check_dynamical_symmetry(
    a: np.ndarray,
    eigen_shift: complex,
    params: ModelParams,
    tol: float = 1e-10,
    hamiltonian_only: bool = False,
) -> SymmetryReport:
    """Test [H, A] = Lambda A together with [D, A] = [D^+, A] = 0.

    ``hamiltonian_only`` drops the jump conditions (the Gamma -> 0 limit).
    """
    a = _check_operator(a, params)
    ops = build_spin_operators(params)
    h = params.omega * ops.sx
    d = jump_operator(params, ops)
    norm_a = _fro(a)
    rh = _fro(h @ a - a @ h - eigen_shift * a)
    rd = _fro(d @ a - a @ d)
    rdd = _fro(d.conj().T @ a - a @ d.conj().T)
    if norm_a == 0.0:
        return SymmetryReport(rh, rd, rdd, True, trivial=True)
    ok = rh < tol * norm_a
    if not hamiltonian_only:
        ok = ok and rd < tol * norm_a and rdd < tol * norm_a
    return SymmetryReport(rh, rd, rdd, bool(ok))
