"""Quantum-jump unraveling of the collective master equation.

Trajectories are propagated with a fixed first-order step. In each step the
state either jumps, psi -> D psi / |D psi|, with probability
p = (Gamma/J) <D^dag D> dt, or evolves under the effective Hamiltonian
H_eff = Omega S_x - i (Gamma/2J) D^dag D and is renormalised.

Each trajectory owns a Philox generator seeded with ``base_seed + index`` and
draws exactly one uniform per step. A trajectory is therefore reproducible
no matter how the ensemble is batched or split across workers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from sslab.errors import ContractViolation, InvalidParameterError, OutOfValidityError
from sslab.params import ModelParams
from sslab.spin_algebra import build_spin_operators, jump_operator, magnetic_numbers, sx_eigenbasis

MAX_JUMP_PROBABILITY = 0.05
DEFAULT_DT = 1e-3
NORM_TOL = 1e-8
_CHUNK_STEPS = 2048
_RENORM_EVERY = 32


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every trajectory."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class TrajectoryRecord:
    seed: int
    params: ModelParams
    times: np.ndarray  # sample grid
    states: np.ndarray  # (n_samples, dim), normalised
    jump_times: np.ndarray
    dt: float

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def jumps_before(self, t: float) -> int:
        return int(np.searchsorted(self.jump_times, t, side="right"))


@dataclass(frozen=True)
class Propagator:
    """Dense first-order step matrices shared by all trajectories of one parameter set."""

    jump: np.ndarray
    no_jump: np.ndarray  # 1 - i H_eff dt
    max_rate: float

    @classmethod
    def build(cls, params: ModelParams, dt: float) -> "Propagator":
        ops = build_spin_operators(params)
        d = jump_operator(params, ops)
        rate_op = (params.gamma / params.j) * (d.conj().T @ d)
        h_eff = params.omega * ops.sx - 0.5j * rate_op
        return cls(
            jump=np.array(d),
            no_jump=np.eye(ops.dim) - 1j * dt * h_eff,
            max_rate=float(np.linalg.eigvalsh(rate_op)[-1]),
        )


def check_step(params: ModelParams, dt: float, propagator: Propagator | None = None) -> Propagator:
    """Build the propagator after checking the worst-case jump probability per step."""
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    prop = propagator or Propagator.build(params, dt)
    worst = prop.max_rate * dt
    if worst >= MAX_JUMP_PROBABILITY:
        suggested = 0.5 * MAX_JUMP_PROBABILITY / prop.max_rate
        raise InvalidParameterError(
            f"dt={dt:g} allows jump probability {worst:.3g} per step (limit {MAX_JUMP_PROBABILITY});"
            f" use dt <= {suggested:.3g}"
        )
    return prop


def _normalised_initial(psi0: np.ndarray, dim: int, n_traj: int) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.ndim == 1:
        psi0 = np.broadcast_to(psi0, (n_traj, psi0.size))
    if psi0.shape != (n_traj, dim):
        raise ContractViolation(f"initial states must have shape ({n_traj}, {dim}) or ({dim},)")
    norms = np.linalg.norm(psi0, axis=1)
    if np.any(np.abs(norms - 1) > NORM_TOL):
        raise ContractViolation("initial state is not normalised")
    return np.array(psi0)


def _step_fixed(prop, psi, rngs, n_steps, rate_scale, sample_steps, dt):
    """First-order stepping of the whole ensemble; returns (samples, jump times)."""
    n_traj, dim = psi.shape
    samples = np.empty((len(sample_steps), n_traj, dim), dtype=complex)
    samples[0] = psi
    next_sample = 1
    jump_times: list[list[float]] = [[] for _ in range(n_traj)]
    # one product gives both the jumped and the no-jump candidates
    both = np.concatenate([prop.jump.T, prop.no_jump.T], axis=1)
    step = 0
    while step < n_steps:
        chunk = min(_CHUNK_STEPS, n_steps - step)
        uniforms = np.stack([r.random(chunk) for r in rngs], axis=1)  # (chunk, n_traj)
        for c in range(chunk):
            out = psi @ both
            d_psi = out[:, :dim]
            norm2 = np.einsum("ij,ij->i", psi.conj(), psi).real
            p = rate_scale * np.einsum("ij,ij->i", d_psi.conj(), d_psi).real / norm2
            hit = uniforms[c] < p
            psi = out[:, dim:]
            k = step + c + 1
            if hit.any():
                idx = np.nonzero(hit)[0]
                psi[idx] = d_psi[idx] / np.linalg.norm(d_psi[idx], axis=1, keepdims=True)
                for i in idx:
                    jump_times[i].append(k * dt)
            if k % _RENORM_EVERY == 0:
                psi /= np.linalg.norm(psi, axis=1, keepdims=True)
            if next_sample < len(sample_steps) and k == sample_steps[next_sample]:
                samples[next_sample] = psi / np.linalg.norm(psi, axis=1, keepdims=True)
                next_sample += 1
        step += chunk
    return [samples[:, i, :] for i in range(n_traj)], jump_times


def _waiting_time_jumps(log_w: np.ndarray, rates: np.ndarray, rngs, t_max: float) -> list[list[float]]:
    """Exact jump times for dynamics diagonal in a fixed basis.

    With sector weights w_m and rates r_m the unjumped norm decays as
    sum_m w_m exp(-r_m tau). The next jump happens when it reaches a uniform
    deviate R. The equation is solved by Newton's method, which converges
    monotonically because log of the norm is convex and decreasing. All
    trajectories take their n-th jump in the same vectorised round, and each
    uses the n-th uniform of its own stream.
    """
    n_traj = log_w.shape[0]
    lw = log_w - np.max(log_w, axis=1, keepdims=True)
    t = np.zeros(n_traj)
    active = np.ones(n_traj, dtype=bool)
    jump_times: list[list[float]] = [[] for _ in range(n_traj)]
    buffer = np.empty((n_traj, 0))
    used = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_r = np.log(rates)[None, :]
    while active.any():
        if used == buffer.shape[1]:
            buffer = np.stack([rng.random(_CHUNK_STEPS) for rng in rngs])
            used = 0
        idx = np.flatnonzero(active)
        log_target = np.log(buffer[idx, used])
        used += 1
        w = lw[idx]
        norm0 = _logsumexp(w)
        target = log_target + norm0
        # jump-free sectors set a floor on the norm; below it no further jump occurs
        floor = _logsumexp(np.where(rates[None, :] == 0, w, -np.inf))
        never = floor >= target
        tau = np.zeros(idx.size)
        todo = ~never
        for _ in range(200):
            if not todo.any():
                break
            expo = w[todo] - tau[todo, None] * rates[None, :]
            g = _logsumexp(expo)
            soft = np.exp(expo - g[:, None])
            slope = -(soft @ rates)
            step = (g - target[todo]) / -slope
            tau[todo] += step
            done = np.abs(step) <= 1e-13 * np.maximum(1.0, tau[todo])
            todo[np.flatnonzero(todo)[done]] = False
        t_new = t[idx] + tau
        stop = never | (t_new > t_max)
        for a, i in enumerate(idx):
            if not stop[a]:
                jump_times[i].append(float(t_new[a]))
        go = ~stop
        moved = idx[go]
        # weights after evolving tau and applying the jump (|d_m|^2 is proportional to r_m)
        lw[moved] = w[go] - tau[go, None] * rates[None, :] + log_r
        lw[moved] -= np.max(lw[moved], axis=1, keepdims=True)
        t[moved] = t_new[go]
        active[idx[stop]] = False
    return jump_times


def _logsumexp(a: np.ndarray) -> np.ndarray:
    top = np.max(a, axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.sum(np.exp(a - safe[:, None]), axis=1))


def _diagonal_states(c0, d, freq, rates, jump_times, times) -> np.ndarray:
    """Normalised amplitudes c0 d^n(t) exp(-i freq t - rates t / 2) at the sample times."""
    n = np.searchsorted(np.asarray(jump_times), times, side="right")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_d = np.log(d.astype(complex))
        # d_m^0 = 1 even where d_m = 0
        jump_part = np.where(n[:, None] > 0, n[:, None] * log_d[None, :], 0.0)
        log_c = np.log(c0.astype(complex))[None, :] + jump_part
    log_c = log_c - times[:, None] * (1j * freq + 0.5 * rates)[None, :]
    re = np.where(np.isfinite(log_c.real), log_c.real, -np.inf)
    shift = np.max(re, axis=1, keepdims=True)
    amp = np.exp(re - shift) * np.exp(1j * np.where(np.isfinite(re), log_c.imag, 0.0))
    return amp / np.linalg.norm(amp, axis=1, keepdims=True)


def run_ensemble(
    params: ModelParams,
    psi0: np.ndarray,
    t_max: float,
    n_traj: int,
    base_seed: int = 0,
    dt: float = DEFAULT_DT,
    sample_dt: float | None = None,
    method: str = "auto",
) -> list[TrajectoryRecord]:
    """Propagate ``n_traj`` trajectories.

    ``psi0`` is a single state or one state per trajectory. States are
    recorded every ``sample_dt`` (rounded to a whole number of steps of
    ``dt``; default only the initial and final states).

    ``method="fixed-step"`` is the first-order scheme vectorised over the
    ensemble. ``method="waiting-time"`` is only available at theta = pi/4,
    where D and H_eff are diagonal in the S_x basis. It samples exact
    continuous-time jump times. ``"auto"`` picks waiting-time at the symmetric
    point and fixed-step elsewhere.
    """
    if n_traj < 1:
        raise InvalidParameterError("n_traj must be >= 1")
    if not t_max > 0:
        raise InvalidParameterError("t_max must be positive")
    if method == "auto":
        method = "waiting-time" if params.is_strong_symmetry_point else "fixed-step"
    if method not in ("fixed-step", "waiting-time"):
        raise InvalidParameterError(f"unknown method {method!r}")
    if method == "waiting-time" and not params.is_strong_symmetry_point:
        raise InvalidParameterError("waiting-time sampling needs diagonal dynamics (theta = pi/4)")
    psi = _normalised_initial(psi0, params.dim, n_traj)
    n_steps = int(round(t_max / dt))
    if n_steps < 1 or abs(n_steps * dt - t_max) > 1e-9 * max(1.0, t_max):
        raise InvalidParameterError("t_max must be a whole number of steps")
    every = n_steps if sample_dt is None else max(1, int(round(sample_dt / dt)))
    sample_steps = list(range(0, n_steps + 1, every))
    if sample_steps[-1] != n_steps:
        sample_steps.append(n_steps)
    times = np.array(sample_steps, dtype=float) * dt
    rngs = [make_rng(base_seed + i) for i in range(n_traj)]

    if method == "fixed-step":
        prop = check_step(params, dt)
        rate_scale = params.gamma / params.j * dt
        states, jump_times = _step_fixed(prop, psi, rngs, n_steps, rate_scale, sample_steps, dt)
    else:
        m, vecs = sx_eigenbasis(params)
        d = math.sqrt(2.0) * m
        rates = sector_rates(params)
        coeffs = psi @ vecs.conj()
        with np.errstate(divide="ignore"):
            log_w = np.log(np.abs(coeffs) ** 2)
        jump_times = _waiting_time_jumps(log_w, rates, rngs, t_max)
        states = [
            _diagonal_states(coeffs[i], d, params.omega * m, rates, jump_times[i], times) @ vecs.T
            for i in range(n_traj)
        ]

    return [
        TrajectoryRecord(
            seed=base_seed + i,
            params=params,
            times=times,
            states=np.array(states[i]),
            jump_times=np.array(jump_times[i], dtype=float),
            dt=dt,
        )
        for i in range(n_traj)
    ]


def run_trajectory(
    params: ModelParams,
    psi0: np.ndarray,
    t_max: float,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    sample_dt: float | None = None,
    method: str = "auto",
) -> TrajectoryRecord:
    return run_ensemble(params, psi0, t_max, 1, base_seed=seed, dt=dt, sample_dt=sample_dt, method=method)[0]


def ensemble_density(records: Sequence[TrajectoryRecord], sample_index: int = -1) -> np.ndarray:
    """Average of |psi><psi| over trajectories at one sample time."""
    states = np.stack([r.states[sample_index] for r in records])
    return np.einsum("ti,tj->ij", states, states.conj()) / len(records)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def sector_rates(params: ModelParams) -> np.ndarray:
    """Jump rate (Gamma/J) <m|D^dag D|m> of each S_x sector at the symmetric point.

    D = sqrt(2) S_x there, so the rate is 2 Gamma m^2 / J.
    """
    m = magnetic_numbers(params.n_spins)
    return 2.0 * params.gamma * m * m / params.j


@dataclass
class FreezingReport:
    times: np.ndarray
    occupations: np.ndarray  # (n_samples, dim) in the S_x basis
    m_values: np.ndarray
    selected: int  # index into m_values
    freeze_time: float  # nan if never frozen

    @property
    def frozen(self) -> bool:
        return not math.isnan(self.freeze_time)

    @property
    def selected_m(self) -> float:
        return float(self.m_values[self.selected])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"p_m{k}" for k in range(self.occupations.shape[1])])
            for t, row in zip(self.times, self.occupations):
                w.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in row])


def freezing_report(
    record: TrajectoryRecord,
    sx_basis: tuple[np.ndarray, np.ndarray] | None = None,
    threshold: float = 0.99,
    window: float = 10.0,
) -> FreezingReport:
    """Sector occupations |<m|psi(t)>|^2 and the first time one sector dominates.

    A trajectory is frozen at the first sample where the same sector keeps
    ``max p_m > threshold`` for ``window`` time units (or until the record
    ends).
    """
    if not record.params.is_strong_symmetry_point:
        raise ContractViolation("freezing analysis requires a theta = pi/4 trajectory")
    m_values, vecs = sx_basis if sx_basis is not None else sx_eigenbasis(record.params)
    occ = np.abs(record.states @ vecs.conj()) ** 2
    top = np.argmax(occ, axis=1)
    above = occ[np.arange(occ.shape[0]), top] > threshold
    freeze_time = math.nan
    t = record.times
    for i in np.nonzero(above)[0]:
        end = np.searchsorted(t, t[i] + window - 1e-12)
        span = slice(i, min(end + 1, t.size))
        if np.all(above[span]) and np.all(top[span] == top[i]):
            freeze_time = float(t[i])
            break
    return FreezingReport(
        times=t, occupations=occ, m_values=np.asarray(m_values), selected=int(top[-1]), freeze_time=freeze_time
    )


@dataclass(frozen=True)
class DecayFit:
    m: float
    slope: float
    r_squared: float
    n_points: int


def occupation_decay_fits(report: FreezingReport, floor: float = 1e-20, min_points: int = 3) -> list[DecayFit]:
    """Log-linear fits of the non-selected sector occupations.

    Points below ``floor`` are dropped, which also excludes sectors emptied
    exactly by a jump (D annihilates m = 0).
    """
    fits = []
    for k in range(report.occupations.shape[1]):
        if k == report.selected:
            continue
        y = report.occupations[:, k]
        keep = y > floor
        if keep.sum() < min_points:
            continue
        t, logy = report.times[keep], np.log(y[keep])
        slope, intercept = np.polyfit(t, logy, 1)
        resid = logy - (slope * t + intercept)
        ss_tot = float(np.sum((logy - logy.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
        fits.append(DecayFit(float(report.m_values[k]), float(slope), r2, int(keep.sum())))
    return fits


@dataclass(frozen=True)
class EnsembleDecayFit:
    selected_m: float
    m: float
    n_trajectories: int
    slope: float
    expected_slope: float
    r_squared: float
    n_points: int


def ensemble_decay_fits(
    reports: Sequence[FreezingReport], params: ModelParams, floor: float = 1e-20, min_points: int = 3
) -> list[EnsembleDecayFit]:
    """Log-linear fits of the trajectory-averaged log occupation, grouped by selected sector.

    Jumps make single-trajectory log occupations a random walk. Their average
    drifts linearly at r_sel - r_m + r_sel ln(r_m / r_sel), which is reported as
    ``expected_slope``. Sectors that a jump empties in one step (r_m = 0 < r_sel)
    and sectors absent from the initial state are skipped. Only sample times
    where every trajectory of the group is above ``floor`` are used.
    """
    rates = sector_rates(params)
    groups: dict[int, list[FreezingReport]] = {}
    for r in reports:
        if r.frozen:
            groups.setdefault(r.selected, []).append(r)
    fits = []
    for sel in sorted(groups):
        group = groups[sel]
        occ = np.stack([r.occupations for r in group])
        times = group[0].times
        for k in range(occ.shape[2]):
            if k == sel or occ[:, 0, k].max() <= floor:
                continue
            if rates[k] == 0 < rates[sel]:
                continue
            ok = np.all(occ[:, :, k] > floor, axis=0)
            if ok.sum() < min_points:
                continue
            t = times[ok]
            y = np.log(occ[:, ok, k]).mean(axis=0)
            slope, intercept = np.polyfit(t, y, 1)
            resid = y - (slope * t + intercept)
            ss_tot = float(np.sum((y - y.mean()) ** 2))
            r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
            r_sel, r_k = rates[sel], rates[k]
            expected = r_sel - r_k + (r_sel * math.log(r_k / r_sel) if r_sel > 0 else 0.0)
            fits.append(
                EnsembleDecayFit(
                    selected_m=float(group[0].m_values[sel]),
                    m=float(group[0].m_values[k]),
                    n_trajectories=len(group),
                    slope=float(slope),
                    expected_slope=expected,
                    r_squared=r2,
                    n_points=int(ok.sum()),
                )
            )
    return fits


def analytic_freezing_pmf(c0: np.ndarray, t: float, n: int, params: ModelParams) -> np.ndarray:
    """Sector distribution after n jumps up to time t at the symmetric point.

    p(m) is proportional to exp(-r_m t) r_m^n |c_m|^2 with r_m the sector jump
    rate from :func:`sector_rates`. ``c0`` are amplitudes in the S_x basis
    ordered m = -J..J.
    """
    if not params.is_strong_symmetry_point:
        raise OutOfValidityError("the freezing distribution holds only at theta = pi/4")
    c0 = np.asarray(c0, dtype=complex)
    if c0.shape != (params.dim,):
        raise ContractViolation(f"expected {params.dim} amplitudes")
    w = np.abs(c0) ** 2
    if abs(w.sum() - 1) > 1e-8:
        raise ContractViolation("amplitudes must be normalised")
    if n < 0 or t < 0:
        raise ContractViolation("n and t must be non-negative")
    r = sector_rates(params)
    with np.errstate(divide="ignore"):
        log_w = np.log(w) - r * t + (n * np.log(r) if n > 0 else 0.0)
    if not np.any(np.isfinite(log_w)):
        raise ContractViolation("no sector is compatible with the given jump count")
    log_w = np.where(np.isfinite(log_w), log_w, -np.inf)
    p = np.exp(log_w - np.max(log_w))
    return p / p.sum()


def poisson_logpmf(k: np.ndarray, mean: float) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if mean == 0:
        return np.where(k == 0, 0.0, -np.inf)
    return k * math.log(mean) - mean - gammaln(k + 1)


def write_trajectory_outputs(record: TrajectoryRecord, report: FreezingReport, stem: str | Path) -> None:
    """``<stem>.csv`` with sector occupations and ``<stem>.json`` with seed, params and jump times."""
    stem = Path(stem)
    report.to_csv(stem.with_suffix(".csv"))
    meta = {
        "seed": record.seed,
        "params": record.params.to_dict(),
        "dt": record.dt,
        "jump_times": [float(f"{t:.12g}") for t in record.jump_times],
    }
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
