"""Batch experiments behind the command-line runner.

Each experiment takes a resolved configuration, writes CSV/JSON datasets
into an output directory and returns a summary for the metadata sidecar.
Scan points run through ``parallel_map``, which keeps grid order whatever the
completion order, so outputs do not depend on ``--jobs``.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from sslab import counting_stats as cs
from sslab import emission as em
from sslab import holstein_primakoff as hp
from sslab import liouvillian as lv
from sslab import mean_field as mf
from sslab import trajectories as tr
from sslab.errors import ContractViolation, InvalidParameterError, SslabError
from sslab.params import ModelParams
from sslab.spin_algebra import build_spin_operators, jump_operator, sx_eigenbasis


def fmt(v: Any) -> str:
    """12 significant digits for floats, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_json(path: Path, data: Any) -> Path:
    with open(path, "w", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o: Any) -> Any:
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def grid(spec: Any) -> np.ndarray:
    """A list of values, or {"start", "stop", "num"} for an inclusive linear grid."""
    if isinstance(spec, dict):
        values = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    elif isinstance(spec, (int, float)):
        values = np.array([float(spec)])
    else:
        values = np.asarray(spec, dtype=float)
    if values.size == 0:
        raise InvalidParameterError("grids must be nonempty")
    return values


def angle(v: Any) -> float:
    """Angles may be numbers or strings such as "pi/8"."""
    if isinstance(v, str):
        expr = v.replace(" ", "")
        num, _, den = expr.partition("/")
        scale = math.pi if "pi" in num else 1.0
        coeff = num.replace("*pi", "").replace("pi", "")
        value = (float(coeff) if coeff not in ("", "+") else 1.0) * scale
        return value / float(den) if den else value
    return float(v)


def angle_grid(spec: Any) -> np.ndarray:
    if isinstance(spec, list):
        return np.array([angle(v) for v in spec])
    if isinstance(spec, dict):
        spec = {k: angle(v) if k in ("start", "stop") else v for k, v in spec.items()}
    return grid(angle(spec) if isinstance(spec, str) else spec)


def model_params(cfg: dict, **changes) -> ModelParams:
    p = dict(cfg["params"])
    p.update(changes)
    return ModelParams(
        n_spins=int(p["n_spins"]),
        omega=float(p.get("omega", 0.0)),
        theta=angle(p.get("theta", 0.0)),
        gamma=float(p.get("gamma", 1.0)),
    )


@dataclass
class Failure:
    point: dict
    error: str

    def as_dict(self) -> dict:
        return {"point": self.point, "error": self.error}


def _guarded(fn: Callable, item: Any) -> tuple[bool, Any]:
    try:
        return True, fn(item)
    except (SslabError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return False, f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # keep the scan alive; the manifest carries the trace
        return False, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def parallel_map(fn: Callable, items: Sequence[Any], jobs: int = 1) -> list[tuple[bool, Any]]:
    """(ok, result-or-message) per item, in input order."""
    guarded = partial(_guarded, fn)
    if jobs <= 1 or len(items) <= 1:
        return [guarded(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(guarded, items))


@dataclass
class RunResult:
    files: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failures: list[Failure] = field(default_factory=list)
    seeds: dict = field(default_factory=dict)

    def add(self, path: Path) -> None:
        self.files.append(path.name)


def _sx_mixture(params: ModelParams, weights: dict) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal weights c over S_x sectors and the state sum_m c_m |m><m|."""
    m, vecs = sx_eigenbasis(params)
    c = np.zeros(params.dim)
    for key, w in weights.items():
        idx = np.flatnonzero(np.abs(m - float(key)) < 1e-9)
        if idx.size != 1:
            raise ContractViolation(f"m={key} is not an S_x eigenvalue for N={params.n_spins}")
        c[idx[0]] += float(w)
    c /= c.sum()
    return c, (vecs * c[None, :]) @ vecs.conj().T


def _sx_superposition(params: ModelParams, amplitudes: dict) -> np.ndarray:
    m, vecs = sx_eigenbasis(params)
    psi = np.zeros(params.dim, dtype=complex)
    for key, a in amplitudes.items():
        idx = np.flatnonzero(np.abs(m - float(key)) < 1e-9)
        if idx.size != 1:
            raise ContractViolation(f"m={key} is not an S_x eigenvalue for N={params.n_spins}")
        psi += complex(a) * vecs[:, idx[0]]
    return psi / np.linalg.norm(psi)


# phase scan


def steady_observables(params: ModelParams) -> dict:
    """<s_z>, optimal squeezing, activity and g2(0) of the unique steady state."""
    rho = lv.steady_state(params)
    ops = build_spin_operators(params)
    d = jump_operator(params, ops)
    dd = d.conj().T @ d
    n1 = float(np.trace(dd @ rho).real)
    n2 = float(np.trace(d.conj().T @ d.conj().T @ d @ d @ rho).real)
    sz = float(np.trace(ops.sz @ rho).real) / params.j
    try:
        sq = hp.spin_squeezing_numeric(rho, ops)
        xi2, phi = sq.xi2, sq.phi
    except ContractViolation:
        xi2 = phi = math.nan
    return {
        "sz": sz,
        "xi2": xi2,
        "phi": phi,
        "activity": params.gamma / params.j * n1,
        # g2 is undefined for a dark steady state
        "g2": n2 / n1**2 if n1 > 1e-12 * params.j else math.nan,
    }


def _phase_point(args: tuple) -> dict:
    return steady_observables(ModelParams(*args))


def phase_scan(cfg: dict, out: Path, jobs: int) -> RunResult:
    base = model_params(cfg)
    omegas, thetas = grid(cfg["omega_grid"]), angle_grid(cfg["theta_grid"])
    points = [(base.n_spins, float(o), float(t), base.gamma) for t in thetas for o in omegas]
    res = RunResult()
    rows = []
    for pt, (ok, val) in zip(points, parallel_map(_phase_point, points, jobs)):
        omega_c = abs(mf.critical_omega(pt[2], pt[3]))
        if ok:
            rows.append([pt[1], pt[2], val["sz"], val["xi2"], val["phi"], val["activity"], val["g2"], omega_c])
        else:
            rows.append([pt[1], pt[2]] + [math.nan] * 5 + [omega_c])
            res.failures.append(Failure({"omega": pt[1], "theta": pt[2]}, val))
    header = ["omega", "theta", "sz", "xi2", "phi_opt", "activity", "g2", "omega_c"]
    res.add(write_csv(out / "phase_scan.csv", header, rows))
    res.summary = {"n_points": len(points), "n_failed": len(res.failures)}
    return res


# gap map


def _gap_point(args: tuple) -> dict:
    params = ModelParams(*args[:4])
    adr = lv.asymptotic_decay_rate(params, dense_max_spins=args[4])
    try:
        hp_value = abs(hp.hp_gap(params))
    except (SslabError, ValueError):
        hp_value = math.nan
    return {"adr": adr, "hp": hp_value}


def gap_map(cfg: dict, out: Path, jobs: int) -> RunResult:
    base = model_params(cfg)
    omegas, thetas = grid(cfg["omega_grid"]), angle_grid(cfg["theta_grid"])
    dense_max = int(cfg.get("dense_max_spins", 30))
    points = [(base.n_spins, float(o), float(t), base.gamma, dense_max) for t in thetas for o in omegas]
    res = RunResult()
    rows = []
    for pt, (ok, val) in zip(points, parallel_map(_gap_point, points, jobs)):
        omega_c = abs(mf.critical_omega(pt[2], pt[3]))
        if ok:
            log_adr = math.log10(val["adr"]) if val["adr"] > 0 else -math.inf
            rows.append([pt[1], pt[2], val["adr"], log_adr, val["hp"], omega_c])
        else:
            rows.append([pt[1], pt[2], math.nan, math.nan, math.nan, omega_c])
            res.failures.append(Failure({"omega": pt[1], "theta": pt[2]}, val))
    res.add(write_csv(out / "gap.csv", ["omega", "theta", "adr", "log10_adr", "adr_hp", "omega_c"], rows))
    res.summary = {"n_points": len(points), "n_failed": len(res.failures)}
    return res


# Liouvillian spectrum


def _spectrum_point(args: tuple) -> dict:
    params = ModelParams(*args)
    spec = lv.liouvillian_spectrum(lv.build_liouvillian(params))
    rwa = lv.rwa_spectrum(params)
    dist = np.min(np.abs(spec.eigenvalues[:, None] - rwa[None, :]), axis=1)
    return {"eigenvalues": spec.eigenvalues, "rwa": rwa, "max_distance": float(dist.max())}


def liouville_spectrum(cfg: dict, out: Path, jobs: int) -> RunResult:
    base = model_params(cfg)
    thetas = angle_grid(cfg["theta_grid"])
    points = [(base.n_spins, base.omega, float(t), base.gamma) for t in thetas]
    res = RunResult()
    distances = []
    for i, (pt, (ok, val)) in enumerate(zip(points, parallel_map(_spectrum_point, points, jobs))):
        if not ok:
            res.failures.append(Failure({"theta": pt[2]}, val))
            continue
        ev, rwa = val["eigenvalues"], val["rwa"]
        res.add(write_csv(out / f"spectrum_theta{i}.csv", ["re_lambda", "im_lambda"], ([z.real, z.imag] for z in ev)))
        rwa = rwa[np.lexsort((-rwa.imag, -rwa.real))]
        res.add(write_csv(out / f"rwa_theta{i}.csv", ["re_lambda", "im_lambda"], ([z.real, z.imag] for z in rwa)))
        distances.append([pt[2], val["max_distance"]])
    res.add(write_csv(out / "rwa_match.csv", ["theta", "max_distance_to_rwa"], distances))
    return res


# mean-field flow


def mean_field_flow(cfg: dict, out: Path, jobs: int) -> RunResult:
    params = model_params(cfg)
    res = RunResult()
    starts = [np.asarray(s, dtype=float) for s in cfg.get("initial", [])]
    n_random = int(cfg.get("n_random", 0))
    if n_random:
        seed = int(cfg.get("base_seed", 0))
        res.seeds["initial_conditions"] = seed
        starts += list(mf.random_unit_vectors(n_random, tr.make_rng(seed)))
    if not starts:
        raise InvalidParameterError("give at least one initial Bloch vector or n_random > 0")
    fp = mf.fixed_point(params) if not params.is_strong_symmetry_point else None
    rows = []
    for i, s0 in enumerate(starts):
        s0 = s0 / np.linalg.norm(s0)
        path = mf.mf_flow(
            mf.BlochVector.from_array(s0),
            params,
            float(cfg["t_max"]),
            step=float(cfg.get("step", 1e-3)),
            n_samples=int(cfg.get("n_samples", 2001)),
        )
        path.to_csv(out / f"flow_{i}.csv")
        res.add(out / f"flow_{i}.csv")
        rec = mf.detect_recurrence(path, tol=float(cfg.get("recurrence_tol", 1e-3)))
        final = path.states[-1]
        dist_fp = float(np.linalg.norm(final - fp.as_array())) if fp is not None else math.nan
        rows.append([i, *s0, *final, path.norm_drift(), dist_fp, int(rec.returned), rec.return_time])
    header = ["index", "sx0", "sy0", "sz0", "sx", "sy", "sz", "norm_drift", "distance_to_fixed_point", "returned", "return_time"]
    res.add(write_csv(out / "flow_summary.csv", header, rows))
    res.summary = {"fixed_point": None if fp is None else fp.as_array().tolist()}
    return res


# trajectory freezing


def _batches(n: int, jobs: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n / max(1, jobs)))
    return [(start, min(size, n - start)) for start in range(0, n, size)]


def _freezing_batch(args: tuple) -> list[tuple]:
    params, psi0, t_max, start, count, base_seed, dt, sample_dt, method = args
    records = tr.run_ensemble(params, psi0, t_max, count, base_seed=base_seed + start, dt=dt, sample_dt=sample_dt, method=method)
    basis = sx_eigenbasis(params)
    return [(r, tr.freezing_report(r, basis)) for r in records]


def trajectory_freezing(cfg: dict, out: Path, jobs: int) -> RunResult:
    params = model_params(cfg)
    if not params.is_strong_symmetry_point:
        raise InvalidParameterError("trajectory-freezing needs theta = pi/4")
    psi0 = _sx_superposition(params, cfg["initial_amplitudes"])
    n_traj, base_seed = int(cfg["n_traj"]), int(cfg["base_seed"])
    t_max, dt = float(cfg["t_max"]), float(cfg.get("dt", tr.DEFAULT_DT))
    tasks = [
        (params, psi0, t_max, s, c, base_seed, dt, float(cfg["sample_dt"]), cfg.get("method", "auto"))
        for s, c in _batches(n_traj, jobs)
    ]
    results: list[tuple] = []
    for ok, val in parallel_map(_freezing_batch, tasks, jobs):
        if not ok:
            raise RuntimeError(val)
        results.extend(val)
    res = RunResult(seeds={"base_seed": base_seed, "n_traj": n_traj, "rule": "trajectory i uses base_seed + i"})
    for i in range(min(int(cfg.get("n_saved", 5)), n_traj)):
        record, report = results[i]
        tr.write_trajectory_outputs(record, report, out / f"trajectory_{i}")
        res.add(out / f"trajectory_{i}.csv")
        res.add(out / f"trajectory_{i}.json")
    rows = [[i, r.seed, r.n_jumps, int(rep.frozen), rep.selected_m, rep.freeze_time] for i, (r, rep) in enumerate(results)]
    res.add(write_csv(out / "freezing_summary.csv", ["index", "seed", "n_jumps", "frozen", "selected_m", "freeze_time"], rows))
    reports = [rep for _, rep in results]
    fits = tr.ensemble_decay_fits(reports, params)
    res.add(
        write_csv(
            out / "decay_fits.csv",
            ["selected_m", "m", "n_trajectories", "slope", "expected_slope", "r_squared", "n_points"],
            ([f.selected_m, f.m, f.n_trajectories, f.slope, f.expected_slope, f.r_squared, f.n_points] for f in fits),
        )
    )
    selected = np.array([rep.selected_m for rep in reports])
    res.summary = {
        "frozen_fraction": float(np.mean([rep.frozen for rep in reports])),
        "selection_frequencies": {fmt(m): float(np.mean(selected == m)) for m in np.unique(selected)},
        "min_r_squared": float(min((f.r_squared for f in fits), default=math.nan)),
    }
    return res


# counting statistics


def _counting_batch(args: tuple) -> np.ndarray:
    params, rho0, horizon, start, count, base_seed, dt, method = args
    psi0 = cs.sample_initial_states(rho0, start + count, base_seed)[start:]
    records = tr.run_ensemble(params, psi0, horizon, count, base_seed=base_seed + start, dt=dt, method=method)
    return np.array([r.n_jumps for r in records])


def counting(cfg: dict, out: Path, jobs: int) -> RunResult:
    params = model_params(cfg)
    horizon = float(cfg["horizon"])
    c, rho0 = _sx_mixture(params, cfg["sector_weights"])
    n_traj, base_seed = int(cfg["n_traj"]), int(cfg["base_seed"])
    res = RunResult(
        seeds={"base_seed": base_seed, "n_traj": n_traj, "rule": "jumps: base_seed + i; initial state: (base_seed + i, 1)"}
    )
    exact = None
    if params.is_strong_symmetry_point:
        exact = cs.exact_counting_pmf(c, params, horizon)
    elif params.n_spins <= int(cfg.get("generating_function_max_spins", 6)):
        k_max = int(cfg.get("k_max", 0)) or int(4 * params.gamma * params.j * horizon) + 10
        exact = cs.generating_function_pmf(params, rho0, horizon, k_max)
    if exact is not None:
        exact.to_csv(out / "exact.csv")
        res.add(out / "exact.csv")
    mc = None
    if n_traj > 0:
        dt, method = float(cfg.get("dt", tr.DEFAULT_DT)), cfg.get("method", "auto")
        tasks = [(params, rho0, horizon, s, k, base_seed, dt, method) for s, k in _batches(n_traj, jobs)]
        counts = []
        for ok, val in parallel_map(_counting_batch, tasks, jobs):
            if not ok:
                raise RuntimeError(val)
            counts.append(val)
        counts = np.concatenate(counts)
        mc = cs.CountingDistribution(horizon, np.bincount(counts).astype(float) / n_traj, "monte-carlo")
        mc.to_csv(out / "mc.csv")
        res.add(out / "mc.csv")
    summary: dict = {"horizon": horizon}
    if exact is not None:
        summary["exact_modes"] = cs.find_modes(exact).tolist()
        summary["exact_mean"] = exact.mean
        summary["truncation_mass"] = exact.truncation_mass
    if mc is not None:
        summary["mc_mean"] = mc.mean
        summary["mc_fano"] = mc.fano
    if exact is not None and mc is not None and params.is_strong_symmetry_point:
        means = tr.sector_rates(params)[c > 0] * horizon
        summary["tv_sector_binned"] = cs.total_variation(exact, mc, cs.sector_bin_edges(means))
    res.summary = summary
    return res


# SCGF and rate function


def _kink_point(args: tuple) -> tuple[np.ndarray, np.ndarray]:
    params, s_grid = args
    return cs.kink_curve(params, s_grid)


def tilted_scgf(cfg: dict, out: Path, jobs: int) -> RunResult:
    params = model_params(cfg)
    res = RunResult()
    curve = cs.scgf(params, grid(cfg["s_grid"]))
    curve.to_csv(out / "scgf.csv")
    res.add(out / "scgf.csv")
    k_grid = grid(cfg["k_grid"]) if "k_grid" in cfg else np.linspace(0, 1.05 * curve.right_derivative * math.e, 1201)
    rate = cs.rate_function(curve, k_grid)
    rate.to_csv(out / "rate_function.csv")
    res.add(out / "rate_function.csv")
    lam_back, clipped = cs.legendre_forward(rate, curve.s)
    err = np.abs(lam_back - curve.lam)[~clipped]
    res.summary = {
        "left_derivative": curve.left_derivative,
        "right_derivative": curve.right_derivative,
        "plateau": None if rate.plateau is None else list(rate.plateau),
        "round_trip_error": float(err.max()) if err.size else math.nan,
    }
    kink = cfg.get("kink")
    if kink:
        sizes = [int(n) for n in kink["sizes"]]
        s_grid = grid(kink["s_grid"])
        tasks = [(model_params(cfg, n_spins=n, omega=kink["omega"], theta=kink["theta"]), s_grid) for n in sizes]
        slopes = {}
        for n, (ok, val) in zip(sizes, parallel_map(_kink_point, tasks, jobs)):
            if not ok:
                res.failures.append(Failure({"n_spins": n}, val))
                continue
            s, k = val
            res.add(write_csv(out / f"activity_N{n}.csv", ["s", "k"], zip(s, k)))
            slopes[str(n)] = float(np.max(np.abs(np.gradient(k, s))))
        res.summary["max_activity_slope"] = slopes
    return res


# emission


def _resolvent_chunk(args: tuple) -> np.ndarray:
    params, omegas, rho = args
    return em.emission_spectrum_resolvent(params, omegas, rho).continuous


def emission(cfg: dict, out: Path, jobs: int) -> RunResult:
    params = model_params(cfg)
    omega = grid(cfg["omega_grid"])
    gamma_det = float(cfg.get("gamma_det", em.DEFAULT_DETECTOR_WIDTH))
    route = cfg.get("route", "auto")
    if route == "auto":
        route = "dense" if params.n_spins <= int(cfg.get("dense_max_spins", 30)) or params.is_strong_symmetry_point else "resolvent"
    res = RunResult()
    if params.is_strong_symmetry_point:
        if route != "dense":
            raise InvalidParameterError("theta = pi/4 needs the dense route (degenerate steady state)")
        spec = lv.liouvillian_spectrum(lv.build_liouvillian(params))
        weights = cfg.get("sector_weights") or {fmt(m): 1.0 for m in sx_eigenbasis(params)[0]}
        _, rho0 = _sx_mixture(params, weights)
        rho = lv.steady_state_projection(spec, rho0)
        rho = 0.5 * (rho + rho.conj().T)
        result = em.emission_spectrum(params, rho, omega, spectrum=spec)
    elif route == "dense":
        result = em.emission_spectrum(params, lv.steady_state(params), omega)
    elif route == "resolvent":
        rho = lv.steady_state(params)
        chunks = [c for c in np.array_split(omega, max(1, jobs)) if c.size]
        parts = []
        for ok, val in parallel_map(_resolvent_chunk, [(params, c, rho) for c in chunks], jobs):
            if not ok:
                raise RuntimeError(val)
            parts.append(val)
        result = em.emission_spectrum_resolvent(params, omega[:0], rho)
        result.omega, result.continuous = omega, np.concatenate(parts)
    else:
        raise InvalidParameterError(f"unknown route {route!r}")
    result.to_csv(out / "spectrum.csv", gamma_det)
    res.add(out / "spectrum.csv")
    result.deltas_to_json(out / "deltas.json")
    res.add(out / "deltas.json")
    res.summary = {
        "route": route,
        "gamma_det": gamma_det,
        "total_weight": result.total_weight,
        "grid_integral": result.integral(gamma_det),
        "n_delta_lines": len(result.deltas),
    }
    return res


# squeezing


def _squeezing_point(args: tuple) -> hp.SqueezingRow:
    params = ModelParams(*args)
    rho = lv.steady_state(params)
    num = hp.spin_squeezing_numeric(rho, build_spin_operators(params))
    try:
        analytic = hp.spin_squeezing_analytic(params)
    except (SslabError, ValueError):
        analytic = math.nan
    return hp.SqueezingRow(params.omega, params.theta, analytic, num.xi2, num.phi)


def squeezing(cfg: dict, out: Path, jobs: int) -> RunResult:
    base = model_params(cfg)
    omegas, thetas = grid(cfg["omega_grid"]), angle_grid(cfg["theta_grid"])
    points = [(base.n_spins, float(o), float(t), base.gamma) for t in thetas for o in omegas]
    res = RunResult()
    rows = []
    for pt, (ok, val) in zip(points, parallel_map(_squeezing_point, points, jobs)):
        if ok:
            rows.append(val)
        else:
            rows.append(hp.SqueezingRow(pt[1], pt[2], math.nan, math.nan, math.nan))
            res.failures.append(Failure({"omega": pt[1], "theta": pt[2]}, val))
    hp.write_squeezing_csv(rows, out / "squeezing.csv")
    res.add(out / "squeezing.csv")
    return res


@dataclass(frozen=True)
class Experiment:
    run: Callable[[dict, Path, int], RunResult]
    preset: dict


PRESETS: dict[str, dict] = {
    "phase-scan": {
        "params": {"n_spins": 50, "gamma": 1.0},
        "omega_grid": {"start": 0.0, "stop": 2.0, "num": 41},
        "theta_grid": ["pi/8"],
    },
    "gap": {
        "params": {"n_spins": 100, "gamma": 1.0},
        "omega_grid": {"start": 0.0, "stop": 2.0, "num": 21},
        "theta_grid": [0.0, "pi/8", "pi/4"],
    },
    "liouville-spectrum": {
        "params": {"n_spins": 20, "omega": 200.0, "gamma": 1.0},
        "theta_grid": [0.0, "pi/8"],
    },
    "mean-field-flow": {
        "params": {"n_spins": 1000, "omega": 0.5, "theta": 0.0, "gamma": 1.0},
        "t_max": 100.0,
        "step": 1e-3,
        "n_samples": 2001,
        "initial": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "n_random": 0,
        "base_seed": 0,
    },
    "trajectory-freezing": {
        "params": {"n_spins": 10, "omega": 0.8, "theta": "pi/4", "gamma": 1.0},
        "initial_amplitudes": {"0": 1.0, "3": 1.0, "5": 1.0},
        "n_traj": 600,
        "t_max": 100.0,
        "sample_dt": 0.1,
        "base_seed": 0,
        "n_saved": 5,
    },
    "counting": {
        "params": {"n_spins": 20, "omega": 0.8, "theta": "pi/4", "gamma": 1.0},
        "horizon": 3000.0,
        "sector_weights": {"1": 1.0, "2": 1.0, "3": 1.0},
        "n_traj": 800,
        "base_seed": 0,
    },
    "tilted-scgf": {
        "params": {"n_spins": 20, "omega": 0.8, "theta": "pi/4", "gamma": 1.0},
        "s_grid": {"start": -1.0, "stop": 1.0, "num": 81},
        "kink": {"omega": 4.0, "theta": 0.0, "sizes": [4, 10, 20], "s_grid": {"start": -0.5, "stop": 0.5, "num": 51}},
    },
    "emission": {
        "params": {"n_spins": 50, "omega": 1.2, "theta": 0.0, "gamma": 1.0},
        "omega_grid": {"start": -4.0, "stop": 4.0, "num": 1601},
        "gamma_det": 0.01,
    },
    "squeezing": {
        "params": {"n_spins": 100, "gamma": 1.0},
        "omega_grid": [0.0, 0.2, 0.4],
        "theta_grid": ["pi/8"],
    },
}

EXPERIMENTS: dict[str, Experiment] = {
    name: Experiment(run, PRESETS[name])
    for name, run in [
        ("phase-scan", phase_scan),
        ("gap", gap_map),
        ("liouville-spectrum", liouville_spectrum),
        ("mean-field-flow", mean_field_flow),
        ("trajectory-freezing", trajectory_freezing),
        ("counting", counting),
        ("tilted-scgf", tilted_scgf),
        ("emission", emission),
        ("squeezing", squeezing),
    ]
}


MERGED_SECTIONS = ("params", "kink")


def merge(base: dict, override: dict) -> dict:
    """Overlay ``override`` on ``base``.

    The "params" and "kink" sections are merged key by key; any other value,
    including weight mappings, is replaced as a whole.
    """
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k in MERGED_SECTIONS and isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **copy.deepcopy(v)}
        else:
            out[k] = copy.deepcopy(v)
    return out
