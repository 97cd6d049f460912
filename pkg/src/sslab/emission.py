"""Two-time correlators and the emission spectrum of the collective decay channel.

With a = D the spectrum is

    S(omega) = (1/pi) Re int_0^inf dtau e^{i omega tau} Tr[a e^{L tau}(rho_ss a^dag)].

Expanding e^{L tau} in left/right eigenmatrices gives one term per
eigenvalue lambda_mu = -gamma_mu/2 + i omega_mu with complex weight
c_mu = Tr[a R_mu] Tr[L_mu rho_ss a^dag] = L_mu + i K_mu. Decaying terms give
Lorentzian plus dispersive lines centred at omega = -omega_mu. Terms with
zero real part give delta lines of weight L_mu and principal-value terms
-(K_mu/pi) P/(omega + omega_mu). Both are kept symbolically and realised
only under detector broadening.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.sparse
import scipy.sparse.linalg

from sslab.errors import ContractViolation, InvalidParameterError, NumericalError
from sslab.liouvillian import (
    MAX_DENSE_SPINS,
    ZERO_TOL,
    LiouvillianSpectrum,
    build_liouvillian,
    liouvillian_spectrum,
    steady_state,
    unvec,
    vec,
)
from sslab.params import ModelParams
from sslab.spin_algebra import check_density_matrix, jump_operator

STATIONARITY_TOL = 1e-8
DEFAULT_DETECTOR_WIDTH = 0.01
_WEIGHT_FLOOR = 1e-14
_MERGE_TOL = 1e-8
_CHUNK = 2048


@dataclass(frozen=True)
class DeltaLine:
    """Zero-real-part term: delta of weight ``l_weight`` at omega = -omega_mu plus a P.V. term."""

    omega_mu: float
    l_weight: float
    k_weight: float

    @property
    def position(self) -> float:
        return -self.omega_mu

    def as_dict(self) -> dict:
        return {"omega": self.omega_mu, "position": self.position, "L_weight": self.l_weight, "K_weight": self.k_weight}


@dataclass
class SpectrumResult:
    omega: np.ndarray
    continuous: np.ndarray
    deltas: list[DeltaLine]
    zero_tol: float
    total_weight: float  # sum of all L_mu, equal to <a^dag a> on the whole line
    line_rates: np.ndarray = field(default_factory=lambda: np.empty(0))  # gamma_mu/2 of the decaying terms
    line_centres: np.ndarray = field(default_factory=lambda: np.empty(0))
    line_weights: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=complex))

    def broadened(self, gamma_det: float = DEFAULT_DETECTOR_WIDTH) -> np.ndarray:
        return broadened_spectrum(self, gamma_det)

    def integral(self, gamma_det: float = DEFAULT_DETECTOR_WIDTH) -> float:
        """Trapezoidal integral of the broadened spectrum over the grid."""
        return float(np.trapezoid(self.broadened(gamma_det), self.omega))

    def to_csv(self, path: str | Path, gamma_det: float = DEFAULT_DETECTOR_WIDTH) -> None:
        total = self.broadened(gamma_det)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "S_continuous", "S_broadened"])
            for row in zip(self.omega, self.continuous, total):
                w.writerow([f"{v:.12g}" for v in row])

    def deltas_to_json(self, path: str | Path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump([d.as_dict() for d in self.deltas], fh, indent=2)
            fh.write("\n")


def _check_stationary(params: ModelParams, rho_ss: np.ndarray) -> np.ndarray:
    rho_ss = check_density_matrix(rho_ss)
    if rho_ss.shape[0] != params.dim:
        raise ContractViolation("rho_ss has the wrong dimension")
    residual = np.linalg.norm(build_liouvillian(params, sparse=True).matrix @ vec(rho_ss))
    if residual > STATIONARITY_TOL:
        raise ContractViolation(f"rho_ss is not stationary: |L rho_ss| = {residual:.3g}")
    return rho_ss


def _dense_spectrum(params: ModelParams, spectrum: LiouvillianSpectrum | None) -> LiouvillianSpectrum:
    if spectrum is None:
        if params.n_spins > MAX_DENSE_SPINS:
            raise InvalidParameterError(
                f"dense spectral route limited to N <= {MAX_DENSE_SPINS}; use emission_spectrum_resolvent"
            )
        spectrum = liouvillian_spectrum(build_liouvillian(params))
    if spectrum.flagged:
        raise NumericalError("Liouvillian spectrum is near-defective; spectral weights are unreliable")
    return spectrum


def spectral_weights(spectrum: LiouvillianSpectrum, a: np.ndarray, rho_ss: np.ndarray) -> np.ndarray:
    """c_mu = Tr[a R_mu] Tr[L_mu rho_ss a^dag] for every eigenvalue."""
    x = rho_ss @ a.conj().T
    # Tr[A B] = sum_ij A_ij B_ji
    right_part = np.einsum("ij,mji->m", a, spectrum.right)
    left_part = np.einsum("mij,ji->m", spectrum.left, x)
    return right_part * left_part


def two_time_correlator(
    params: ModelParams, rho_ss: np.ndarray, tau_grid: Sequence[float], spectrum: LiouvillianSpectrum | None = None
) -> np.ndarray:
    """<a^dag(t) a(t + tau)> in the stationary state, from the spectral decomposition."""
    rho_ss = _check_stationary(params, rho_ss)
    spectrum = _dense_spectrum(params, spectrum)
    c = spectral_weights(spectrum, jump_operator(params), rho_ss)
    tau = np.asarray(tau_grid, dtype=float)
    return np.exp(np.outer(tau, spectrum.eigenvalues)) @ c


def two_time_correlator_direct(params: ModelParams, rho_ss: np.ndarray, tau_grid: Sequence[float]) -> np.ndarray:
    """Same correlator by propagating rho_ss a^dag with the sparse matrix exponential."""
    rho_ss = _check_stationary(params, rho_ss)
    tau = np.asarray(tau_grid, dtype=float)
    if tau.size == 0:
        return np.empty(0, dtype=complex)
    if np.any(np.diff(tau) <= 0) or tau[0] < 0:
        raise ContractViolation("tau grid must be non-negative and increasing")
    a = jump_operator(params)
    lv = build_liouvillian(params, sparse=True).sparse()
    x0 = vec(rho_ss @ a.conj().T)
    if tau.size == 1:
        xs = [scipy.sparse.linalg.expm_multiply(lv * tau[0], x0)]
    else:
        uniform = np.allclose(np.diff(tau), tau[1] - tau[0], rtol=1e-10, atol=0)
        if uniform:
            xs = scipy.sparse.linalg.expm_multiply(lv, x0, start=tau[0], stop=tau[-1], num=tau.size, endpoint=True)
        else:
            xs = [scipy.sparse.linalg.expm_multiply(lv * t, x0) for t in tau]
    row = vec(a.T)  # Tr[a X] = vec(a^T) . vec(X)
    return np.array([row @ x for x in xs])


def emission_spectrum(
    params: ModelParams,
    rho_ss: np.ndarray,
    omega_grid: Sequence[float],
    zero_tol: float = ZERO_TOL,
    spectrum: LiouvillianSpectrum | None = None,
) -> SpectrumResult:
    """Continuous part on ``omega_grid`` plus the list of delta lines."""
    rho_ss = _check_stationary(params, rho_ss)
    spectrum = _dense_spectrum(params, spectrum)
    c = spectral_weights(spectrum, jump_operator(params), rho_ss)
    lam = spectrum.eigenvalues
    zero_real = np.abs(lam.real) <= zero_tol
    unique_steady = spectrum.n_steady == 1
    deltas = []
    # weights of single eigenvectors inside a degenerate block depend on the basis;
    # only the block sum is meaningful, so lines at one frequency are merged
    idx = np.flatnonzero(zero_real)
    idx = idx[np.argsort(lam[idx].imag)]
    groups: list[list[int]] = []
    for mu in idx:
        if groups and abs(lam[mu].imag - lam[groups[-1][-1]].imag) <= _MERGE_TOL * max(1.0, abs(lam[mu].imag)):
            groups[-1].append(mu)
        else:
            groups.append([mu])
    for g in groups:
        w = complex(c[g].sum())
        if abs(w) <= _WEIGHT_FLOOR:
            continue
        if unique_steady and abs(w.imag) > 1e-9 * max(1.0, abs(w)):
            raise NumericalError(
                f"dispersive weight {w.imag:.3g} on a zero-real-part line although the steady state is unique"
            )
        k_weight = 0.0 if unique_steady else w.imag
        deltas.append(DeltaLine(float(np.mean(lam[g].imag)), w.real, k_weight))
    decaying = ~zero_real & (np.abs(c) > _WEIGHT_FLOOR)
    rates, centres, weights = -lam[decaying].real, -lam[decaying].imag, c[decaying]
    omega = np.asarray(omega_grid, dtype=float)
    return SpectrumResult(
        omega=omega,
        continuous=_lines(omega, rates, centres, weights),
        deltas=deltas,
        zero_tol=zero_tol,
        total_weight=float(c.real.sum()),
        line_rates=rates,
        line_centres=centres,
        line_weights=weights,
    )


def _lines(omega: np.ndarray, half_widths: np.ndarray, centres: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """(1/pi) sum Re[c / (g - i (omega - centre))]: Lorentzian plus dispersive parts."""
    out = np.empty(omega.size)
    for start in range(0, omega.size, _CHUNK):
        w = omega[start : start + _CHUNK, None]
        out[start : start + _CHUNK] = (weights[None, :] / (half_widths[None, :] - 1j * (w - centres[None, :]))).real.sum(
            axis=1
        )
    return out / np.pi


def broadened_spectrum(result: SpectrumResult, gamma_det: float = DEFAULT_DETECTOR_WIDTH) -> np.ndarray:
    """Continuous part plus delta lines turned into lines of half-width gamma_det / 2.

    A delta of weight L becomes a Lorentzian of area L. Its principal-value
    partner becomes the matching dispersive profile, which integrates to zero.
    """
    if not gamma_det > 0:
        raise InvalidParameterError("detector width must be positive")
    if not result.deltas:
        return result.continuous.copy()
    centres = np.array([d.position for d in result.deltas])
    weights = np.array([complex(d.l_weight, d.k_weight) for d in result.deltas])
    half = np.full(centres.size, 0.5 * gamma_det)
    return result.continuous + _lines(result.omega, half, centres, weights)


def _deflated_generator(params: ModelParams) -> scipy.sparse.csc_matrix:
    """L - |e_00><Tr| : equals L on traceless matrices and is invertible for a unique steady state."""
    lv = build_liouvillian(params, sparse=True).sparse().astype(complex)
    d = params.dim
    trace_idx = np.arange(d) * (d + 1)
    update = scipy.sparse.csc_matrix((np.ones(d), (np.zeros(d, dtype=int), trace_idx)), shape=lv.shape)
    return (lv - update).tocsc()


def emission_spectrum_resolvent(
    params: ModelParams, omega_grid: Sequence[float], rho_ss: np.ndarray | None = None
) -> SpectrumResult:
    """Continuous spectrum from sparse solves, for sizes beyond the dense route.

    S_c(omega) = -(1/pi) Re Tr[a (L + i omega)^{-1} X'] with
    X' = rho_ss a^dag - Tr[rho_ss a^dag] rho_ss, which removes the stationary
    term. That term is returned as a single delta line at omega = 0 of weight
    |<a>|^2. Requires a unique steady state.
    """
    if params.is_strong_symmetry_point:
        raise InvalidParameterError("resolvent route needs a unique steady state (theta != pi/4)")
    rho_ss = steady_state(params) if rho_ss is None else _check_stationary(params, rho_ss)
    a = jump_operator(params)
    x = rho_ss @ a.conj().T
    mean_a = complex(np.trace(a @ rho_ss))
    x_fluct = vec(x - np.trace(x) * rho_ss)
    base = _deflated_generator(params)
    eye = scipy.sparse.identity(base.shape[0], dtype=complex, format="csc")
    row = vec(a.T)
    omega = np.asarray(omega_grid, dtype=float)
    values = np.empty(omega.size)
    for i, w in enumerate(omega):
        y = scipy.sparse.linalg.splu(base + 1j * w * eye).solve(x_fluct)
        values[i] = -(row @ y).real / np.pi
    steady_weight = abs(mean_a) ** 2
    total = float(np.trace(a.conj().T @ a @ rho_ss).real)
    return SpectrumResult(
        omega=omega,
        continuous=values,
        deltas=[DeltaLine(0.0, steady_weight, 0.0)] if steady_weight > _WEIGHT_FLOOR else [],
        zero_tol=ZERO_TOL,
        total_weight=total,
    )


def emitted_intensity(params: ModelParams, rho_ss: np.ndarray) -> float:
    """Tr[D^dag D rho_ss], the total weight of the spectrum."""
    d = jump_operator(params)
    return float(np.trace(d.conj().T @ d @ rho_ss).real)


@dataclass(frozen=True)
class PeakFit:
    centre: float
    half_width: float
    height: float
    background: float


def _lorentzian(w, centre, hwhm, height, background):
    return background + height * hwhm**2 / ((w - centre) ** 2 + hwhm**2)


def fit_peak(omega: np.ndarray, values: np.ndarray, guess_centre: float, window: float) -> PeakFit:
    """Least-squares Lorentzian plus constant over |omega - guess_centre| <= window."""
    sel = np.abs(omega - guess_centre) <= window
    if np.count_nonzero(sel) < 5:
        raise ContractViolation("too few grid points inside the fitting window")
    w, y = omega[sel], values[sel]
    i = int(np.argmax(y))
    top, floor = float(y[i]), float(np.min(y))
    above = w[y >= floor + 0.5 * (top - floor)]
    hwhm0 = max(0.5 * float(above[-1] - above[0]), float(w[1] - w[0]))
    p0 = (float(w[i]), hwhm0, top - floor, floor)
    try:
        popt, _ = scipy.optimize.curve_fit(_lorentzian, w, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise NumericalError(f"Lorentzian fit did not converge: {exc}") from exc
    return PeakFit(float(popt[0]), abs(float(popt[1])), float(popt[2]), float(popt[3]))


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """(exponent, prefactor) of y = prefactor x^exponent by least squares in log-log."""
    slope, intercept = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope), float(math.exp(intercept))


def sideband_maxima(omega: np.ndarray, values: np.ndarray, near: float, window: float) -> tuple[float, float]:
    """Positions of the largest values within ``window`` of -near and +near."""
    out = []
    for centre in (-near, near):
        sel = np.flatnonzero(np.abs(omega - centre) <= window)
        if sel.size == 0:
            raise ContractViolation("no grid points near the expected sideband")
        out.append(float(omega[sel[np.argmax(values[sel])]]))
    return out[0], out[1]


def unvec_density(v: np.ndarray, params: ModelParams) -> np.ndarray:
    return unvec(v, params.dim)
