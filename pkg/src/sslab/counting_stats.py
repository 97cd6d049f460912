"""Jump-counting statistics: distributions, tilted generator, SCGF and rate functions.

K counts quantum jumps in a window of length T. The scaled cumulant
generating function lambda(s) is the eigenvalue of largest real part of the
tilted generator, where jumps carry an extra factor e^s. Its Legendre
transform gives the large-deviation rate function phi(k) of the activity
k = K/T.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.interpolate
import scipy.linalg
import scipy.optimize
import scipy.signal

from sslab.errors import ContractViolation, InvalidParameterError, NumericalError, OutOfValidityError
from sslab.liouvillian import build_liouvillian, steady_state, vec
from sslab.numerics import eig_general
from sslab.params import ModelParams
from sslab.spin_algebra import check_density_matrix, jump_operator, sx_eigenbasis
from sslab.trajectories import DEFAULT_DT, poisson_logpmf, run_ensemble, sector_rates

MIN_TRAJECTORIES = 50
DERIVATIVE_STEP = 1e-4
CONVEXITY_TOL = 1e-8
# dense tilted spectra beyond this size are too slow for s-grid scans
MAX_TILTED_SPINS = 40


@dataclass
class CountingDistribution:
    horizon: float
    p: np.ndarray  # p[K] for K = 0..K_max
    source: str
    truncation_mass: float = 0.0

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.p.size)

    @property
    def mean(self) -> float:
        return float(self.k @ self.p / self.p.sum())

    @property
    def variance(self) -> float:
        m = self.mean
        return float(((self.k - m) ** 2) @ self.p / self.p.sum())

    @property
    def fano(self) -> float:
        return self.variance / self.mean if self.mean > 0 else math.nan

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["K", "p"])
            for k, p in enumerate(self.p):
                w.writerow([k, f"{p:.12g}"])


def _sector_weights(weights, params: ModelParams) -> np.ndarray:
    """Accept a full vector over m = -J..J or a mapping {m: c_m}."""
    if isinstance(weights, dict):
        m_values = sx_eigenbasis(params)[0]
        w = np.zeros(params.dim)
        for m, c in weights.items():
            idx = np.flatnonzero(np.abs(m_values - m) < 1e-9)
            if idx.size != 1:
                raise ContractViolation(f"m={m} is not an S_x eigenvalue for N={params.n_spins}")
            w[idx[0]] += c
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (params.dim,):
            raise ContractViolation(f"expected {params.dim} sector weights")
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ContractViolation("sector weights must be non-negative and sum to one")
    return w


def exact_counting_pmf(weights, params: ModelParams, horizon: float, k_max: int | None = None) -> CountingDistribution:
    """Poisson mixture over S_x sectors, exact at the symmetric point.

    Each sector m contributes a Poisson law with mean r_m T, weighted by
    c_m. Only diagonal initial states sum_m c_m |m><m| are accepted.
    """
    if not params.is_strong_symmetry_point:
        raise OutOfValidityError("the Poisson-mixture counting law holds only at theta = pi/4")
    if not horizon > 0:
        raise InvalidParameterError("horizon must be positive")
    w = _sector_weights(weights, params)
    means = sector_rates(params) * horizon
    populated = w > 0
    if k_max is None:
        top = float(np.max(means[populated]))
        k_max = int(math.ceil(top + 8 * math.sqrt(top))) + 1
    k = np.arange(k_max + 1)
    p = np.zeros(k.size)
    for c, mu in zip(w[populated], means[populated]):
        p += c * np.exp(poisson_logpmf(k, mu))
    return CountingDistribution(horizon, p, "exact", truncation_mass=max(0.0, 1.0 - float(p.sum())))


def sample_initial_states(rho0: np.ndarray, n_traj: int, base_seed: int) -> np.ndarray:
    """Pure states drawn from the eigen-decomposition of rho0.

    The draw for trajectory i uses its own stream keyed by (base_seed + i, 1).
    This keeps it independent of the trajectory's jump stream.
    """
    rho0 = check_density_matrix(rho0)
    vals, vecs = np.linalg.eigh(0.5 * (rho0 + rho0.conj().T))
    vals = np.clip(vals, 0.0, None)
    vals /= vals.sum()
    if vals.max() > 1 - 1e-12:
        return np.broadcast_to(vecs[:, np.argmax(vals)], (n_traj, rho0.shape[0])).copy()
    cdf = np.cumsum(vals)
    picks = [
        int(np.searchsorted(cdf, np.random.Generator(np.random.Philox(np.random.SeedSequence([base_seed + i, 1]))).random()))
        for i in range(n_traj)
    ]
    return vecs[:, np.minimum(picks, vals.size - 1)].T.copy()


def mc_counting_pmf(
    params: ModelParams,
    rho0: np.ndarray,
    horizon: float,
    n_traj: int,
    base_seed: int = 0,
    dt: float = DEFAULT_DT,
    method: str = "auto",
) -> CountingDistribution:
    """Histogram of jump counts over ``n_traj`` trajectories of length ``horizon``."""
    if n_traj < MIN_TRAJECTORIES:
        warnings.warn(f"only {n_traj} trajectories; counting histogram will be noisy", stacklevel=2)
    psi0 = sample_initial_states(rho0, n_traj, base_seed)
    records = run_ensemble(params, psi0, horizon, n_traj, base_seed=base_seed, dt=dt, method=method)
    counts = np.array([r.n_jumps for r in records])
    p = np.bincount(counts).astype(float) / n_traj
    return CountingDistribution(horizon, p, "monte-carlo")


def generating_function_pmf(
    params: ModelParams, rho0: np.ndarray, horizon: float, k_max: int
) -> CountingDistribution:
    """Exact p_T(K) for any theta by Fourier inversion of the characteristic function.

    Z(phi) = Tr[exp(W_{i phi} T) rho0] is evaluated on M >= k_max + 1 points
    of the unit circle and p_K = (1/M) sum_j Z(phi_j) exp(-i phi_j K). Mass
    beyond k_max aliases back, so k_max must cover the distribution.
    """
    rho0 = check_density_matrix(rho0)
    n_points = 1 << int(math.ceil(math.log2(k_max + 1)))
    phis = 2 * np.pi * np.arange(n_points) / n_points
    v0 = vec(rho0)
    trace_row = vec(np.eye(params.dim))
    z = np.empty(n_points, dtype=complex)
    for i, phi in enumerate(phis):
        w = build_liouvillian(params, counting_field=1j * phi).dense()
        z[i] = trace_row @ (scipy.linalg.expm(w * horizon) @ v0)
    p = np.fft.fft(z).real / n_points
    p = np.clip(p[: k_max + 1], 0.0, None)
    return CountingDistribution(horizon, p, "generating-function", truncation_mass=max(0.0, 1 - float(p.sum())))


def total_variation(a: CountingDistribution, b: CountingDistribution, edges: Sequence[float] | None = None) -> float:
    """Total-variation distance, optionally after binning K into [edges[i], edges[i+1])."""
    n = max(a.p.size, b.p.size)
    pa = np.pad(a.p, (0, n - a.p.size))
    pb = np.pad(b.p, (0, n - b.p.size))
    if edges is not None:
        k = np.arange(n)
        idx = np.digitize(k, edges) - 1
        nb = len(edges) - 1
        valid = (idx >= 0) & (idx < nb)
        pa = np.bincount(idx[valid], weights=pa[valid], minlength=nb)
        pb = np.bincount(idx[valid], weights=pb[valid], minlength=nb)
    return 0.5 * float(np.abs(pa - pb).sum())


def sector_bin_edges(means: Sequence[float]) -> np.ndarray:
    """One bin per Poisson component, split halfway between neighbouring means."""
    mu = np.unique(np.asarray(means, dtype=float))
    return np.concatenate([[0.0], 0.5 * (mu[1:] + mu[:-1]), [np.inf]])


def find_modes(
    dist: CountingDistribution, rel_prominence: float = 0.1, floor: float = 1e-6, smooth: int = 0
) -> np.ndarray:
    """K values of local maxima of p_T(K).

    A maximum counts when its prominence is at least ``rel_prominence`` of its
    own height and the height exceeds ``floor`` times the global maximum.
    Judging each peak by its own height keeps narrow spikes (such as an empty
    sector at K = 0) from hiding broad modes. ``smooth`` applies a moving
    average first, for sampled histograms.
    """
    p = dist.p
    if smooth > 1:
        p = np.convolve(p, np.ones(smooth) / smooth, mode="same")
    padded = np.concatenate([[0.0], p, [0.0]])
    peaks, props = scipy.signal.find_peaks(padded, prominence=0.0)
    heights = padded[peaks]
    keep = (props["prominences"] >= rel_prominence * heights) & (heights > floor * p.max())
    return peaks[keep] - 1


def count_modes(dist: CountingDistribution, **kwargs) -> int:
    return int(find_modes(dist, **kwargs).size)


def tilted_liouvillian(params: ModelParams, s: float, sparse: bool = False):
    """Generator with jump term weighted by e^s."""
    if not math.isfinite(s):
        raise InvalidParameterError("counting field must be finite")
    return build_liouvillian(params, sparse=sparse, counting_field=s)


def leading_eigenvalue(params: ModelParams, s: float) -> tuple[float, bool]:
    """(lambda(s), defective flag): largest real part of the tilted spectrum."""
    if params.n_spins > MAX_TILTED_SPINS:
        raise InvalidParameterError(f"tilted spectra are computed densely; N <= {MAX_TILTED_SPINS}")
    system = eig_general(tilted_liouvillian(params, s).dense())
    return float(np.max(system.eigenvalues.real)), system.flagged


@dataclass
class ScgfCurve:
    s: np.ndarray
    lam: np.ndarray
    left_derivative: float
    right_derivative: float
    flagged: bool = False

    @property
    def discontinuous(self) -> bool:
        return abs(self.right_derivative - self.left_derivative) > 10 * DERIVATIVE_STEP

    def second_differences(self) -> np.ndarray:
        s, y = self.s, self.lam
        h1, h2 = np.diff(s)[:-1], np.diff(s)[1:]
        return 2 * (h1 * y[2:] - (h1 + h2) * y[1:-1] + h2 * y[:-2]) / (h1 * h2 * (h1 + h2))

    @property
    def is_convex(self) -> bool:
        return bool(np.all(self.second_differences() >= -CONVEXITY_TOL * max(1.0, np.max(np.abs(self.lam)))))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "lambda"])
            for s, y in zip(self.s, self.lam):
                w.writerow([f"{s:.12g}", f"{y:.12g}"])


def scgf(params: ModelParams, s_grid: Sequence[float], h: float = DERIVATIVE_STEP) -> ScgfCurve:
    """lambda(s) on ``s_grid`` plus one-sided derivatives at s = 0 with step ``h``."""
    s = np.asarray(sorted(set(float(x) for x in s_grid)))
    if not np.any(np.abs(s) < 1e-15):
        raise ContractViolation("the s grid must contain 0")
    lam = np.empty(s.size)
    flagged = False
    for i, si in enumerate(s):
        lam[i], f = leading_eigenvalue(params, si)
        flagged |= f
    lam0 = lam[np.argmin(np.abs(s))]
    lam_minus, f1 = leading_eigenvalue(params, -h)
    lam_plus, f2 = leading_eigenvalue(params, h)
    if flagged or f1 or f2:
        warnings.warn("tilted spectrum is near-defective at some s; lambda(s) may be inaccurate", stacklevel=2)
    return ScgfCurve(
        s=s,
        lam=lam,
        left_derivative=(lam0 - lam_minus) / h,
        right_derivative=(lam_plus - lam0) / h,
        flagged=flagged or f1 or f2,
    )


def kink_curve(params: ModelParams, s_grid: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """s-dependent activity d lambda / ds on the interior of ``s_grid`` (central differences)."""
    s = np.asarray(s_grid, dtype=float)
    lam = np.array([leading_eigenvalue(params, x)[0] for x in s])
    return s[1:-1], (lam[2:] - lam[:-2]) / (s[2:] - s[:-2])


@dataclass(frozen=True)
class ActivityReport:
    activity: float
    fano: float
    mandel_q: float
    left_derivative: float
    right_derivative: float
    discontinuous: bool
    steady_state_activity: float
    richardson_error: float


def activity_and_mandel(params: ModelParams, h: float = DERIVATIVE_STEP) -> ActivityReport:
    """Mean jump rate and counting noise from derivatives of lambda(s) at s = 0.

    ``fano`` is lambda''/lambda' = Var(K)/<K> in the long-time limit and
    ``mandel_q`` = fano - 1 (zero for Poissonian counts). When the one-sided
    derivatives differ by more than 10 h the activity is reported as NaN and
    both one-sided values are returned instead.
    """
    lam = {x: leading_eigenvalue(params, x)[0] for x in (-2 * h, -h, 0.0, h, 2 * h)}
    left = (lam[0.0] - lam[-h]) / h
    right = (lam[h] - lam[0.0]) / h
    jump = abs(right - left) > 10 * h * max(1.0, abs(right))
    d1 = (lam[h] - lam[-h]) / (2 * h)
    d1_coarse = (lam[2 * h] - lam[-2 * h]) / (4 * h)
    d2 = (lam[h] - 2 * lam[0.0] + lam[-h]) / h**2
    if params.is_strong_symmetry_point:
        ss_activity = math.nan
    else:
        rho = steady_state(params)
        d = jump_operator(params)
        ss_activity = float((params.gamma / params.j) * np.trace(d.conj().T @ d @ rho).real)
    if jump:
        return ActivityReport(math.nan, math.nan, math.nan, left, right, True, ss_activity, math.nan)
    fano = d2 / d1 if abs(d1) > 1e-12 else math.nan
    return ActivityReport(
        activity=d1,
        fano=fano,
        mandel_q=fano - 1 if math.isfinite(fano) else math.nan,
        left_derivative=left,
        right_derivative=right,
        discontinuous=False,
        steady_state_activity=ss_activity,
        richardson_error=abs(d1 - d1_coarse),
    )


@dataclass
class RateFunction:
    k: np.ndarray
    phi: np.ndarray
    s_opt: np.ndarray
    clipped: np.ndarray  # maximiser sits on the s-grid boundary
    plateau: tuple[float, float] | None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "phi"])
            for k, p in zip(self.k, self.phi):
                w.writerow([f"{k:.12g}", f"{p:.12g}"])


def _legendre(
    x: np.ndarray, y: np.ndarray, targets: np.ndarray, kinks: Sequence[float] = (), closed_below: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """max_x [t x - y(x)] for each target t.

    The grid maximum is refined on shape-preserving interpolants built
    separately between kinks, so a corner in y is not smoothed away. A
    maximiser on the last grid point, or on the first unless
    ``closed_below`` says the domain really ends there, is marked clipped.
    """
    cuts = sorted({float(x[0]), float(x[-1])} | {float(c) for c in kinks if x[0] < c < x[-1]})
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        sel = (x >= lo) & (x <= hi)
        if np.count_nonzero(sel) >= 2:
            pieces.append((lo, hi, scipy.interpolate.PchipInterpolator(x[sel], y[sel])))
    out = np.empty(targets.size)
    arg = np.empty(targets.size)
    clipped = np.zeros(targets.size, dtype=bool)
    for i, t in enumerate(targets):
        vals = t * x - y
        j = int(np.argmax(vals))
        best, xbest = float(vals[j]), float(x[j])
        lo_j, hi_j = x[max(j - 1, 0)], x[min(j + 1, x.size - 1)]
        for lo, hi, interp in pieces:
            a, b = max(lo, lo_j), min(hi, hi_j)
            if b <= a:
                continue
            res = scipy.optimize.minimize_scalar(
                lambda z: -(t * z - float(interp(z))), bounds=(a, b), method="bounded", options={"xatol": 1e-12}
            )
            if -res.fun > best:
                best, xbest = float(-res.fun), float(res.x)
        out[i], arg[i] = best, xbest
        clipped[i] = j == x.size - 1 or (j == 0 and not closed_below)
    return out, arg, clipped


def rate_function(curve: ScgfCurve, k_grid: Sequence[float]) -> RateFunction:
    """phi(k) = max_s [k s - lambda(s)] with a plateau report for kinks at s = 0."""
    if not curve.is_convex:
        raise NumericalError("lambda(s) is not convex on the grid; the Legendre transform is ill-defined")
    k = np.asarray(k_grid, dtype=float)
    kinks = (0.0,) if curve.discontinuous else ()
    phi, s_opt, clipped = _legendre(curve.s, curve.lam, k, kinks)
    plateau = (curve.left_derivative, curve.right_derivative) if curve.discontinuous else None
    return RateFunction(k=k, phi=phi, s_opt=s_opt, clipped=clipped, plateau=plateau)


def legendre_forward(rate: RateFunction, s_grid: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """lambda(s) = max_k [k s - phi(k)] from a tabulated rate function; returns (values, clipped)."""
    s = np.asarray(s_grid, dtype=float)
    # counts are non-negative, so k = 0 is a true edge of the domain
    lam, _, clipped = _legendre(rate.k, rate.phi, s, closed_below=rate.k[0] == 0.0)
    return lam, clipped


def poisson_rate_function(k: np.ndarray, rate: float) -> np.ndarray:
    """k ln(k/r) - k + r, the Legendre transform of r (e^s - 1)."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(k > 0, k * np.log(k / rate) - k + rate, rate)
