"""Thermodynamic-limit flow of the normalised collective spin.

With s = <S>/J and the effective decay rate g = Gamma_- - Gamma_+ the
large-N equations are

    ds_x/dt = g s_x s_z
    ds_y/dt = -Omega s_z + g s_y s_z
    ds_z/dt = Omega s_y - g (s_x^2 + s_y^2)

They conserve |s|. Integration is done in Cartesian form. The polar form
(s_z = -cos Theta) is exposed for analysis away from the poles only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sslab.errors import ContractViolation, OutOfValidityError
from sslab.numerics import OdeSettings, integrate_ode
from sslab.params import ModelParams

POLE_GUARD = 1e-8


@dataclass(frozen=True)
class BlochVector:
    s_x: float
    s_y: float
    s_z: float

    @classmethod
    def from_array(cls, a) -> "BlochVector":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.s_x, self.s_y, self.s_z])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class PolarAngles:
    """Angles with Theta measured from the -z axis, so s_z = -cos(Theta)."""

    theta: float
    phi: float

    def to_bloch(self) -> BlochVector:
        st = math.sin(self.theta)
        return BlochVector(st * math.cos(self.phi), st * math.sin(self.phi), -math.cos(self.theta))

    @classmethod
    def from_bloch(cls, s: BlochVector) -> "PolarAngles":
        r = s.norm
        if r == 0:
            raise ContractViolation("zero vector has no direction")
        return cls(math.acos(max(-1.0, min(1.0, -s.s_z / r))), math.atan2(s.s_y, s.s_x))


@dataclass(frozen=True)
class RatePair:
    gamma_minus: float
    gamma_plus: float

    @classmethod
    def from_params(cls, params: ModelParams) -> "RatePair":
        return cls(params.gamma_minus, params.gamma_plus)

    @property
    def difference(self) -> float:
        return self.gamma_minus - self.gamma_plus

    @property
    def total(self) -> float:
        return self.gamma_minus + self.gamma_plus


def _rhs(omega: float, g: float):
    def f(_t: float, s: np.ndarray) -> np.ndarray:
        sx, sy, sz = s
        return np.array([g * sx * sz, -omega * sz + g * sy * sz, omega * sy - g * (sx * sx + sy * sy)])

    return f


def mf_derivatives(s: BlochVector, params: ModelParams) -> BlochVector:
    a = s.as_array()
    if not np.all(np.isfinite(a)):
        raise ContractViolation("Bloch vector must be finite")
    g = RatePair.from_params(params).difference
    return BlochVector.from_array(_rhs(params.omega, g)(0.0, a))


def angle_derivatives(a: PolarAngles, params: ModelParams) -> tuple[float, float]:
    """(dTheta/dt, dPhi/dt). Raises near the poles, where cot(Theta) diverges."""
    if min(abs(a.theta), abs(math.pi - a.theta)) < POLE_GUARD:
        raise OutOfValidityError(
            "polar form is singular at Theta = 0 or pi; integrate with mf_derivatives instead"
        )
    g = RatePair.from_params(params).difference
    theta_dot = params.omega * math.sin(a.phi) - g * math.sin(a.theta)
    phi_dot = params.omega * math.cos(a.phi) / math.tan(a.theta)
    return theta_dot, phi_dot


def critical_omega(theta: float, gamma: float = 1.0) -> float:
    """Drive at which the polarised phase ends, Gamma (cos^2 theta - sin^2 theta).

    Negative for theta > pi/4. There the roles of the up and down poles swap
    and |Omega_c| is the relevant threshold.
    """
    return gamma * (math.cos(theta) ** 2 - math.sin(theta) ** 2)


def magnetization(params: ModelParams) -> float | None:
    """Stationary s_z of the polarised phase, or None above the critical drive."""
    if params.is_strong_symmetry_point:
        raise OutOfValidityError("magnetization is undefined at theta = pi/4 (no effective decay)")
    g = RatePair.from_params(params).difference
    ratio = params.omega / abs(g)
    if ratio > 1.0:
        return None
    return -math.sqrt(max(0.0, 1.0 - ratio * ratio))


def fixed_point(params: ModelParams) -> BlochVector | None:
    """Attracting stationary point of the flow, None in the thermal phase.

    For theta < pi/4 this is (0, sqrt(1 - M^2), M). For theta > pi/4 the
    effective decay pumps upwards and the image under (s_y, s_z) -> (-s_y, -s_z)
    is returned.
    """
    m = magnetization(params)
    if m is None:
        return None
    sign = math.copysign(1.0, RatePair.from_params(params).difference)
    return BlochVector(0.0, sign * math.sqrt(max(0.0, 1.0 - m * m)), sign * m)


@dataclass(frozen=True)
class FlowPath:
    times: np.ndarray
    states: np.ndarray  # (n_times, 3)

    @property
    def final(self) -> BlochVector:
        return BlochVector.from_array(self.states[-1])

    def norm_drift(self) -> float:
        norms = np.linalg.norm(self.states, axis=1)
        return float(np.max(np.abs(norms - norms[0])))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "sx", "sy", "sz"])
            for t, s in zip(self.times, self.states):
                w.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in s])


def mf_flow(
    s0: BlochVector,
    params: ModelParams,
    t_max: float,
    step: float = 1e-3,
    n_samples: int | None = None,
) -> FlowPath:
    """RK4 path on the unit sphere starting from ``s0``.

    By default every integration step is recorded; ``n_samples`` thins the
    output to evenly spaced times without changing the step size.
    """
    a = s0.as_array()
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ContractViolation(f"initial Bloch vector must have unit norm, got {np.linalg.norm(a):.12g}")
    if not t_max > 0:
        raise ContractViolation("t_max must be positive")
    g = RatePair.from_params(params).difference
    settings = OdeSettings(step=step, t_max=t_max)
    t_eval = None if n_samples is None else np.linspace(0.0, t_max, n_samples)
    times, states = integrate_ode(_rhs(params.omega, g), a, settings, t_eval=t_eval)
    return FlowPath(times=times, states=states)


@dataclass(frozen=True)
class RecurrenceReport:
    returned: bool
    return_time: float
    distance: float


def detect_recurrence(path: FlowPath, tol: float = 1e-3, departure: float | None = None) -> RecurrenceReport:
    """First return of the path to its starting point.

    The path must first move at least ``departure`` (default 10 tol) away.
    The closest later approach is then refined by a parabola through the
    three samples around the minimum. ``returned`` is true when that approach
    is within ``tol``.
    """
    departure = 10 * tol if departure is None else departure
    d = np.linalg.norm(path.states - path.states[0], axis=1)
    left = np.nonzero(d > departure)[0]
    if left.size == 0:
        return RecurrenceReport(False, math.nan, math.nan)
    start = left[0]
    back = np.nonzero(d[start:] < departure)[0]
    if back.size == 0:
        return RecurrenceReport(False, math.nan, float(np.min(d[start:])))
    i0 = start + back[0]
    leave_again = np.nonzero(d[i0:] > departure)[0]
    i1 = i0 + leave_again[0] if leave_again.size else d.size
    k = i0 + int(np.argmin(d[i0:i1]))
    t_min, d_min = float(path.times[k]), float(d[k])
    if 0 < k < d.size - 1:
        # squared distance is smooth near the minimum
        y0, y1, y2 = d[k - 1] ** 2, d[k] ** 2, d[k + 1] ** 2
        h = path.times[k + 1] - path.times[k]
        curv = y0 - 2 * y1 + y2
        if curv > 0:
            shift = 0.5 * (y0 - y2) / curv
            t_min = float(path.times[k] + shift * h)
            d_min = math.sqrt(max(0.0, y1 - 0.125 * (y0 - y2) ** 2 / curv))
    return RecurrenceReport(d_min <= tol, t_min, d_min)


def random_unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
