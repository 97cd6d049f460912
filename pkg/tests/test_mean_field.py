import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sslab.errors import ContractViolation, OutOfValidityError
from sslab.liouvillian import steady_state
from sslab.mean_field import (
    BlochVector,
    PolarAngles,
    RatePair,
    angle_derivatives,
    critical_omega,
    detect_recurrence,
    fixed_point,
    magnetization,
    mf_derivatives,
    mf_flow,
    random_unit_vectors,
)
from sslab.params import ModelParams
from sslab.spin_algebra import build_spin_operators

PI4 = math.pi / 4
unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 0.1)


def test_fixed_point_is_stationary():
    params = ModelParams(1, omega=0.5, theta=0.0)
    m = magnetization(params)
    s = BlochVector(0.0, math.sqrt(1 - m * m), m)
    assert np.max(np.abs(mf_derivatives(s, params).as_array())) < 1e-12
    np.testing.assert_allclose(fixed_point(params).as_array(), s.as_array(), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(unit, st.floats(0, 3), st.floats(0, math.pi / 2))
def test_derivative_orthogonal_to_state(v, omega, theta):
    s = BlochVector.from_array(np.array(v) / np.linalg.norm(v))
    ds = mf_derivatives(s, ModelParams(1, omega=omega, theta=theta))
    assert abs(np.dot(s.as_array(), ds.as_array())) < 1e-12


def test_symmetric_point_rotation():
    omega = 0.8
    params = ModelParams(1, omega=omega, theta=PI4)
    s = BlochVector(0.3, 0.5, -math.sqrt(1 - 0.09 - 0.25))
    ds = mf_derivatives(s, params)
    assert abs(ds.s_x) < 1e-15
    # (s_y, s_z) rotates rigidly at angular rate Omega
    assert ds.s_y == pytest.approx(-omega * s.s_z)
    assert ds.s_z == pytest.approx(omega * s.s_y)


def test_polar_form():
    params = ModelParams(1, omega=0.4, theta=0.0)
    td, _ = angle_derivatives(PolarAngles(1.0, math.pi / 2), params)
    assert td == pytest.approx(0.4 - math.sin(1.0))
    td, _ = angle_derivatives(PolarAngles(math.asin(0.4), math.pi / 2), params)
    assert abs(td) < 1e-15
    with pytest.raises(OutOfValidityError):
        angle_derivatives(PolarAngles(0.0, 0.0), params)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, math.pi - 0.01), st.floats(-math.pi, math.pi), st.floats(0, 2), st.floats(0, 0.7))
def test_polar_form_matches_cartesian(th, ph, omega, theta):
    params = ModelParams(1, omega=omega, theta=theta)
    a = PolarAngles(th, ph)
    td, pd = angle_derivatives(a, params)
    eps = 1e-6
    ahead = PolarAngles(th + eps * td, ph + eps * pd).to_bloch().as_array()
    behind = PolarAngles(th - eps * td, ph - eps * pd).to_bloch().as_array()
    flow = mf_derivatives(a.to_bloch(), params).as_array()
    np.testing.assert_allclose((ahead - behind) / (2 * eps), flow, atol=1e-6)
    back = PolarAngles.from_bloch(a.to_bloch())
    assert back.theta == pytest.approx(th) and math.cos(back.phi - ph) == pytest.approx(1.0)


def test_critical_omega_values():
    assert critical_omega(0.0) == 1.0
    assert abs(critical_omega(PI4)) < 1e-15
    assert critical_omega(math.pi / 8) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


@settings(max_examples=50)
@given(st.floats(0, math.pi / 2), st.floats(0.1, 5))
def test_critical_omega_antisymmetric(theta, gamma):
    assert critical_omega(theta, gamma) == pytest.approx(-critical_omega(math.pi / 2 - theta, gamma), abs=1e-14)


def test_rate_pair():
    rp = RatePair.from_params(ModelParams(1, theta=0.3, gamma=2.0))
    assert rp.total == pytest.approx(2.0)
    assert rp.difference == pytest.approx(critical_omega(0.3, 2.0))


def test_magnetization_values():
    assert magnetization(ModelParams(1, omega=0.0)) == -1.0
    assert magnetization(ModelParams(1, omega=1.0)) == 0.0
    assert magnetization(ModelParams(1, omega=0.5)) == pytest.approx(-0.8660254, abs=1e-7)
    assert magnetization(ModelParams(1, omega=1.2)) is None
    with pytest.raises(OutOfValidityError):
        magnetization(ModelParams(1, theta=PI4))


def test_magnetization_matches_large_n_steady_state():
    ops = build_spin_operators(60)
    rho = steady_state(ModelParams(60, omega=0.5))
    assert abs(np.trace(ops.sz @ rho).real / 30 - magnetization(ModelParams(1, omega=0.5))) < 0.05


def test_fixed_point_above_symmetric_point_is_flipped():
    params = ModelParams(1, omega=0.3, theta=math.pi / 2 - 0.2)
    s = fixed_point(params)
    assert s.s_z > 0
    assert np.max(np.abs(mf_derivatives(s, params).as_array())) < 1e-12


def test_norm_conserved_long_flow():
    s0 = BlochVector(0.6, 0.0, -0.8)
    for params in (ModelParams(1, omega=0.5), ModelParams(1, omega=1.2), ModelParams(1, omega=0.8, theta=PI4)):
        path = mf_flow(s0, params, t_max=100.0)
        assert path.norm_drift() < 1e-8


def test_symmetric_point_conserves_sx():
    path = mf_flow(BlochVector(0.3, 0.0, -math.sqrt(0.91)), ModelParams(1, omega=0.8, theta=PI4), t_max=100.0)
    assert np.max(np.abs(path.states[:, 0] - 0.3)) < 1e-8
    # the orbit radius in the (s_y, s_z) plane is sqrt(1 - s_x^2)
    np.testing.assert_allclose(np.hypot(path.states[:, 1], path.states[:, 2]), math.sqrt(0.91), atol=1e-8)


def test_basin_of_attraction():
    params = ModelParams(1, omega=0.5, theta=0.0)
    target = fixed_point(params).as_array()
    for v in random_unit_vectors(20, np.random.default_rng(3)):
        if v[2] > 0.999:  # the repelling pole
            continue
        path = mf_flow(BlochVector.from_array(v), params, t_max=50.0, step=1e-2, n_samples=2)
        assert np.linalg.norm(path.states[-1] - target) < 1e-4


def test_thermal_phase_orbit_recurs():
    params = ModelParams(1, omega=1.2, theta=0.0)
    for v in random_unit_vectors(5, np.random.default_rng(5)):
        path = mf_flow(BlochVector.from_array(v), params, t_max=60.0)
        rep = detect_recurrence(path)
        assert rep.returned, rep
        assert rep.distance < 1e-3


def test_ferromagnetic_flow_does_not_recur():
    path = mf_flow(BlochVector(0.6, 0.0, 0.8), ModelParams(1, omega=0.5), t_max=50.0)
    assert not detect_recurrence(path).returned


def test_flow_input_checks():
    with pytest.raises(ContractViolation):
        mf_flow(BlochVector(1.0, 1.0, 0.0), ModelParams(1), t_max=1.0)
    with pytest.raises(ContractViolation):
        mf_flow(BlochVector(1.0, 0.0, 0.0), ModelParams(1), t_max=0.0)
    with pytest.raises(ContractViolation):
        mf_derivatives(BlochVector(math.nan, 0.0, 0.0), ModelParams(1))


def test_flow_csv(tmp_path):
    path = mf_flow(BlochVector(0.0, 0.0, -1.0), ModelParams(1, omega=0.5), t_max=1.0, n_samples=11)
    path.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "t,sx,sy,sz" and len(lines) == 12
