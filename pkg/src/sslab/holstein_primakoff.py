"""Large-N closed forms from a bosonic expansion around the polarised state.

Valid in the ferromagnetic phase, Omega <= |Gamma_- - Gamma_+|, theta != pi/4.
For theta > pi/4 the effective decay pumps upwards. The model is mapped onto
pi/2 - theta by the rotation (S_y, S_z) -> (-S_y, -S_z), which leaves the drive
invariant and swaps the roles of S_- and S_+. Rates, gaps and squeezing are
computed on the mirrored parameters and spin components are flipped back.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.optimize

from sslab.errors import ContractViolation, OutOfValidityError
from sslab.mean_field import magnetization
from sslab.params import ModelParams
from sslab.spin_algebra import SpinOperatorSet, check_density_matrix

PHI_GRID_POINTS = 721


def _oriented(params: ModelParams) -> tuple[ModelParams, float]:
    """Parameters with Gamma_- > Gamma_+ and the sign of the spin flip (+1 or -1)."""
    if params.is_strong_symmetry_point:
        raise OutOfValidityError("expansion undefined at theta = pi/4: no effective decay")
    if params.gamma_minus > params.gamma_plus:
        return params, 1.0
    return params.replace(theta=math.pi / 2 - params.theta), -1.0


def _ferro_magnetization(params: ModelParams) -> float:
    m = magnetization(params)
    if m is None:
        raise OutOfValidityError(
            f"Omega={params.omega:g} exceeds the critical drive {abs(params.gamma_minus - params.gamma_plus):g};"
            " the expansion only holds in the ferromagnetic phase"
        )
    return m


@dataclass(frozen=True)
class HpCoefficients:
    magnetization: float
    beta: complex
    k: float
    a: float
    b: float
    chi: float
    gamma_minus_eff: float
    gamma_plus_eff: float
    eta: float
    mirrored: bool

    @property
    def damping(self) -> float:
        """Net bosonic damping gamma_- - gamma_+ (positive when stable)."""
        return self.gamma_minus_eff - self.gamma_plus_eff


def hp_coefficients(params: ModelParams) -> HpCoefficients:
    p, sign = _oriented(params)
    m = _ferro_magnetization(p)
    beta = -1j * math.sqrt(1.0 + m)
    b_abs2 = abs(beta) ** 2
    k = 2.0 - b_abs2
    a = (2 * k - b_abs2) / (2 * math.sqrt(k))
    b = (-(beta**2) / (2 * math.sqrt(k))).real
    gm, gp, chi = p.gamma_minus, p.gamma_plus, p.chi
    return HpCoefficients(
        magnetization=m,
        beta=beta,
        k=k,
        a=a,
        b=b,
        chi=chi,
        gamma_minus_eff=gm * a * a + gp * b * b + 2 * chi * a * b,
        gamma_plus_eff=gp * a * a + gm * b * b + 2 * chi * a * b,
        eta=a * b * (gm + gp) + chi * (a * a + b * b),
        mirrored=sign < 0,
    )


def hp_gap(params: ModelParams) -> float:
    """Slowest relaxation eigenvalue (Gamma_- - Gamma_+) M, negative in the polarised phase."""
    p, _ = _oriented(params)
    return (p.gamma_minus - p.gamma_plus) * _ferro_magnetization(p)


def hp_gap_from_coefficients(params: ModelParams) -> float:
    """Same gap obtained as (gamma_+ - gamma_-)/2 from the bosonic rates."""
    c = hp_coefficients(params)
    return -0.5 * c.damping


def gap_candidates(params: ModelParams) -> tuple[float, float, float]:
    """Eigenvalues for the three displacement roots: (stable, mirror, thermal-branch)."""
    p, _ = _oriented(params)
    g = p.gamma_minus - p.gamma_plus
    m = _ferro_magnetization(p)
    q = math.sqrt(1.0 + (p.omega / g) ** 2)
    return g * m, -g * m, g * q


def hp_observables(params: ModelParams) -> tuple[float, float, float]:
    """Normalised mean spin (<s_x>, <s_y>, <s_z>) to leading order."""
    p, sign = _oriented(params)
    m = _ferro_magnetization(p)
    return 0.0, sign * math.sqrt(max(0.0, 1.0 - m * m)), sign * m


def hp_correlators(params: ModelParams) -> tuple[float, float]:
    """(<b^dag b>, <b^2>) of the Gaussian bosonic steady state."""
    c = hp_coefficients(params)
    if not c.damping > 1e-14:
        raise OutOfValidityError("bosonic damping vanishes at the critical drive; correlators diverge")
    return c.gamma_plus_eff / c.damping, -c.eta / c.damping


def hp_variance_sx(params: ModelParams) -> float:
    """Variance of S_x / J to order 1/J.

    The anomalous correlator enters with a plus sign:
    k/(2J) (<b^dag b> + <b^2> + 1/2). This is the combination that reproduces
    the squeezing closed form and exact steady states.
    """
    c = hp_coefficients(params)
    nb, b2 = hp_correlators(params)
    return c.k / (2 * params.j) * (nb + b2 + 0.5)


def spin_squeezing_analytic(params: ModelParams) -> float:
    """Large-N squeezing parameter xi^2 = |M| (cos theta - sin theta) / (cos theta + sin theta).

    This is the closed form of the bosonic-correlator expression (see
    :func:`spin_squeezing_from_correlators`). It goes to 1 for theta = 0,
    Omega = 0 and vanishes both at theta -> pi/4 and on the critical line.
    """
    p, _ = _oriented(params)
    m = _ferro_magnetization(p)
    c, s = math.cos(p.theta), math.sin(p.theta)
    return -m * (c - s) / (c + s)


def spin_squeezing_weak_drive(params: ModelParams) -> float:
    """(1 - M)(1/2 + (Gamma_+ - sqrt(Gamma_- Gamma_+)) / (Gamma_- - Gamma_+)).

    Coincides with :func:`spin_squeezing_analytic` at Omega = 0 only; for
    Omega > 0 it overestimates the squeezing parameter.
    """
    p, _ = _oriented(params)
    m = _ferro_magnetization(p)
    gm, gp = p.gamma_minus, p.gamma_plus
    return (1 - m) * (0.5 + (gp - math.sqrt(gm * gp)) / (gm - gp))


def spin_squeezing_weak_drive_simplified(params: ModelParams) -> float:
    """Equivalent form (1 - M)(cos - sin) / (2 (cos + sin)) of :func:`spin_squeezing_weak_drive`."""
    p, _ = _oriented(params)
    m = _ferro_magnetization(p)
    c, s = math.cos(p.theta), math.sin(p.theta)
    return (1 - m) * (c - s) / (2 * (c + s))


def spin_squeezing_from_correlators(params: ModelParams) -> float:
    """Squeezing from the bosonic rates, k ((gamma_+ - eta)/(gamma_- - gamma_+) + 1/2)."""
    c = hp_coefficients(params)
    if not c.damping > 1e-14:
        raise OutOfValidityError("bosonic damping vanishes at the critical drive")
    return c.k * ((c.gamma_plus_eff - c.eta) / c.damping + 0.5)


@dataclass(frozen=True)
class SqueezingResult:
    xi2: float
    phi: float
    mean_spin: np.ndarray


def _perpendicular_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # phi = 0 is the x axis whenever the mean spin is not along x
    ref = np.array([1.0, 0.0, 0.0])
    e1 = ref - n * (n @ ref)
    if np.linalg.norm(e1) < 1e-8:
        ref = np.array([0.0, 1.0, 0.0])
        e1 = ref - n * (n @ ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def spin_squeezing_numeric(rho: np.ndarray, spin_ops: SpinOperatorSet) -> SqueezingResult:
    """Minimise N Var(S . u) / |<S>|^2 over unit u perpendicular to <S>.

    Directions are u(phi) = cos(phi) e1 + sin(phi) (n x e1), with n the mean
    spin direction and e1 the x axis projected onto the perpendicular plane.
    A 721-point grid over [-pi/2, pi/2) is followed by a golden-section
    refinement. The returned angle is wrapped into [-pi/2, pi/2).
    """
    rho = check_density_matrix(rho)
    if rho.shape[0] != spin_ops.dim:
        raise ContractViolation("density matrix and spin operators have different dimensions")
    ops = (spin_ops.sx, spin_ops.sy, spin_ops.sz)
    mean = np.array([np.trace(rho @ o).real for o in ops])
    norm = float(np.linalg.norm(mean))
    j = spin_ops.j
    if norm < 1e-10 * max(j, 1.0):
        raise ContractViolation("mean spin vanishes; the squeezing direction is undefined")
    second = np.array([[np.trace(rho @ (a @ b + b @ a)).real / 2 for b in ops] for a in ops])
    cov = second - np.outer(mean, mean)
    e1, e2 = _perpendicular_frame(mean / norm)
    v11, v22, v12 = e1 @ cov @ e1, e2 @ cov @ e2, e1 @ cov @ e2
    n_spins = 2 * j

    def xi2(phi: float) -> float:
        c, s = math.cos(phi), math.sin(phi)
        return n_spins * (c * c * v11 + s * s * v22 + 2 * c * s * v12) / norm**2

    grid = np.linspace(-math.pi / 2, math.pi / 2, PHI_GRID_POINTS, endpoint=False)
    values = n_spins * (
        np.cos(grid) ** 2 * v11 + np.sin(grid) ** 2 * v22 + 2 * np.cos(grid) * np.sin(grid) * v12
    ) / norm**2
    i = int(np.argmin(values))
    h = grid[1] - grid[0]
    lo, mid, hi = grid[i] - h, grid[i], grid[i] + h
    if xi2(mid) < min(xi2(lo), xi2(hi)):
        phi = float(scipy.optimize.golden(xi2, brack=(lo, mid, hi), tol=1e-10))
    else:
        phi = float(mid)  # flat direction: the grid value is already optimal
    if xi2(phi) > values[i]:
        phi = float(mid)
    phi = (phi + math.pi / 2) % math.pi - math.pi / 2
    return SqueezingResult(xi2=xi2(phi), phi=phi, mean_spin=mean)


@dataclass(frozen=True)
class SqueezingRow:
    omega: float
    theta: float
    xi2_analytic: float
    xi2_numeric: float
    phi_opt: float


def write_squeezing_csv(rows: Iterable[SqueezingRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "theta", "xi2_analytic", "xi2_numeric", "phi_opt"])
        for r in rows:
            w.writerow([f"{v:.12g}" for v in (r.omega, r.theta, r.xi2_analytic, r.xi2_numeric, r.phi_opt)])
