"""Collective spin operators, the squeezed jump operator and spin coherent states.

All matrices live in the symmetric (J = N/2) subspace, in the S_z eigenbasis
ordered by ascending magnetic number m = -J, ..., +J.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from sslab.errors import ContractViolation, InvalidParameterError
from sslab.params import ModelParams

HERMITIAN_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpinOperatorSet:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    sp: np.ndarray
    sm: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    @property
    def j(self) -> float:
        return (self.dim - 1) / 2

    @property
    def sx_plus(self) -> np.ndarray:
        """Ladder operator (S_z + i S_y)/2 along x; lowers the S_x eigenvalue by one."""
        return 0.5 * (self.sz + 1j * self.sy)

    @property
    def sx_minus(self) -> np.ndarray:
        """Ladder operator (S_z - i S_y)/2 along x; raises the S_x eigenvalue by one."""
        return 0.5 * (self.sz - 1j * self.sy)


def magnetic_numbers(n_spins: int) -> np.ndarray:
    j = n_spins / 2
    return -j + np.arange(n_spins + 1, dtype=float)


def _n_spins_of(params) -> int:
    n = params.n_spins if isinstance(params, ModelParams) else params
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"number of spins must be a positive integer, got {n!r}")
    return int(n)


def build_spin_operators(params: ModelParams | int) -> SpinOperatorSet:
    """Collective spin matrices for ``params.n_spins`` spins (an int is also accepted)."""
    n = _n_spins_of(params)
    j = n / 2
    m = magnetic_numbers(n)
    # <m+1|S_+|m> = sqrt(J(J+1) - m(m+1)), sits one row below the diagonal
    ladder = np.sqrt(np.maximum(j * (j + 1) - m[:-1] * (m[:-1] + 1), 0.0))
    sp = np.diag(ladder, k=-1).astype(complex)
    sm = sp.conj().T.copy()
    sz = np.diag(m).astype(complex)
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    return SpinOperatorSet(
        sx=_frozen(sx), sy=_frozen(sy), sz=_frozen(sz), sp=_frozen(sp), sm=_frozen(sm.copy())
    )


def jump_operator(params: ModelParams, ops: SpinOperatorSet | None = None) -> np.ndarray:
    """Squeezed decay operator D = cos(theta) S_- + sin(theta) S_+."""
    ops = ops or build_spin_operators(params)
    d = math.cos(params.theta) * ops.sm + math.sin(params.theta) * ops.sp
    return _frozen(d)


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(op)))) if op.size else 1.0
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) <= tol * scale)


def hermitian_eigenbasis(op: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Ascending (eigenvalue, eigenvector) pairs of a Hermitian operator.

    Eigenvector phases are fixed so that the largest-magnitude component is
    real and positive, which makes the basis reproducible across runs.
    """
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ContractViolation("operator must be a square matrix")
    if not is_hermitian(op):
        raise ContractViolation("operator is not Hermitian within 1e-10")
    herm = 0.5 * (op + op.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    idx = np.argmax(np.abs(vecs), axis=0)
    phases = vecs[idx, np.arange(vecs.shape[1])]
    vecs = vecs * (np.abs(phases) / phases)[None, :]
    return [(float(vals[k]), vecs[:, k]) for k in range(len(vals))]


def eigenbasis_matrix(op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Same as :func:`hermitian_eigenbasis` packed as (eigenvalues, column matrix)."""
    pairs = hermitian_eigenbasis(op)
    vals = np.array([p[0] for p in pairs])
    vecs = np.column_stack([p[1] for p in pairs])
    return vals, vecs


def sx_eigenbasis(params: ModelParams | int) -> tuple[np.ndarray, np.ndarray]:
    """S_x eigenvalues (snapped to the exact ladder -J..J) and eigenvectors."""
    n = _n_spins_of(params)
    vals, vecs = eigenbasis_matrix(build_spin_operators(n).sx)
    return magnetic_numbers(n), vecs


def spin_coherent_state(params: ModelParams | int, theta: float, phi: float) -> np.ndarray:
    """Spin coherent state pointing along (sin T cos P, sin T sin P, -cos T).

    The polar angle is measured from the negative z axis, so ``theta=0`` is
    the m = -J state.
    """
    n = _n_spins_of(params)
    m = magnetic_numbers(n)
    k = np.arange(n + 1)  # k = J + m
    log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    s, c = math.sin(theta / 2), math.cos(theta / 2)
    log_s = math.log(s) if s > 0 else -np.inf
    log_c = math.log(c) if c > 0 else -np.inf
    # 0 * log(0) must vanish at the poles
    with np.errstate(invalid="ignore"):
        term_s = np.where(k > 0, k * log_s, 0.0)
        term_c = np.where(n - k > 0, (n - k) * log_c, 0.0)
    amp = np.exp(0.5 * log_binom + term_s + term_c)
    psi = amp * np.exp(-1j * m * phi)
    return psi / np.linalg.norm(psi)


@dataclass(frozen=True)
class SphereField:
    """Scalar field on a (Theta, Phi) grid; Theta is measured from -z."""

    theta: np.ndarray  # 1-D, [0, pi]
    phi: np.ndarray  # 1-D, [-pi, pi]
    values: np.ndarray  # shape (len(theta), len(phi))

    def integrate(self) -> float:
        """Surface integral with the sin(Theta) measure (trapezoid rule)."""
        inner = np.trapezoid(self.values, self.phi, axis=1)
        return float(np.trapezoid(inner * np.sin(self.theta), self.theta))

    def argmax(self) -> tuple[float, float]:
        i, k = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.theta[i]), float(self.phi[k])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "phi", "q"])
            for i, th in enumerate(self.theta):
                for k, ph in enumerate(self.phi):
                    w.writerow([f"{th:.12g}", f"{ph:.12g}", f"{self.values[i, k]:.12g}"])


def sphere_grid(n_theta: int = 91, n_phi: int = 181) -> tuple[np.ndarray, np.ndarray]:
    return np.linspace(0.0, np.pi, n_theta), np.linspace(-np.pi, np.pi, n_phi)


def check_density_matrix(rho: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractViolation("density matrix must be square")
    if not is_hermitian(rho, tol):
        raise ContractViolation("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ContractViolation(f"density matrix trace is {np.trace(rho).real:.3g}, expected 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -1e-6:
        raise ContractViolation("density matrix has negative eigenvalues")
    return rho


def husimi_q(rho: np.ndarray, grid: tuple[np.ndarray, np.ndarray] | None = None) -> SphereField:
    """Husimi function Q(Theta, Phi) = <Theta,Phi| rho |Theta,Phi>.

    Normalised so that (2J+1)/(4 pi) times the surface integral of Q is one.
    """
    rho = check_density_matrix(rho)
    theta, phi = grid if grid is not None else sphere_grid()
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n = rho.shape[0] - 1
    m = magnetic_numbers(n)
    k = np.arange(n + 1)
    log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    # amplitudes factor into a theta part and a phi phase
    with np.errstate(divide="ignore"):
        ls = np.log(np.sin(theta / 2))[:, None]
        lc = np.log(np.cos(theta / 2))[:, None]
    with np.errstate(invalid="ignore"):
        term_s = np.where(k[None, :] > 0, k[None, :] * ls, 0.0)
        term_c = np.where((n - k)[None, :] > 0, (n - k)[None, :] * lc, 0.0)
    amp = np.exp(0.5 * log_binom[None, :] + term_s + term_c)  # (n_theta, dim)
    phase = np.exp(-1j * np.outer(phi, m))  # (n_phi, dim)
    states = amp[:, None, :] * phase[None, :, :]  # (n_theta, n_phi, dim)
    q = np.einsum("tpi,ij,tpj->tp", states.conj(), rho, states).real
    return SphereField(theta=theta, phi=phi, values=np.clip(q, 0.0, None))
