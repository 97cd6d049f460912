import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ladder_oracle, random_density
from sslab.errors import ContractViolation, InvalidParameterError
from sslab.params import ModelParams
from sslab.spin_algebra import (
    build_spin_operators,
    eigenbasis_matrix,
    hermitian_eigenbasis,
    husimi_q,
    jump_operator,
    magnetic_numbers,
    sphere_grid,
    spin_coherent_state,
    sx_eigenbasis,
)

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def test_single_spin_is_half_pauli():
    ops = build_spin_operators(1)
    # ascending m puts m = -1/2 first, so sigma_z and sigma_y flip sign against the usual order
    flip = np.array([[0, 1], [1, 0]])
    for op, pauli in zip((ops.sx, ops.sy, ops.sz), PAULI):
        np.testing.assert_allclose(flip @ op @ flip, pauli / 2, atol=1e-15)


def test_matches_explicit_matrix_elements():
    for n in (1, 2, 5, 10):
        sx, sy, sz, sp, sm = ladder_oracle(n)
        ops = build_spin_operators(n)
        for a, b in zip((ops.sx, ops.sy, ops.sz, ops.sp, ops.sm), (sx, sy, sz, sp, sm)):
            np.testing.assert_allclose(a, b, atol=1e-13)


def test_casimir_n4():
    ops = build_spin_operators(4)
    np.testing.assert_allclose(ops.sx @ ops.sx + ops.sy @ ops.sy + ops.sz @ ops.sz, 6 * np.eye(5), atol=1e-13)


def test_commutator_n2():
    ops = build_spin_operators(2)
    assert np.max(np.abs(ops.sx @ ops.sy - ops.sy @ ops.sx - 1j * ops.sz)) < 1e-14


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=100))
def test_angular_momentum_algebra(n):
    ops = build_spin_operators(n)
    s = (ops.sx, ops.sy, ops.sz)
    for i in range(3):
        a, b, c = s[i], s[(i + 1) % 3], s[(i + 2) % 3]
        scale = max(1.0, n / 2)
        assert np.max(np.abs(a @ b - b @ a - 1j * c)) < 1e-13 * scale**2
    np.testing.assert_allclose(ops.sp, ops.sx + 1j * ops.sy, atol=1e-14)
    j = n / 2
    casimir = ops.sx @ ops.sx + ops.sy @ ops.sy + ops.sz @ ops.sz
    assert np.max(np.abs(casimir - j * (j + 1) * np.eye(n + 1))) < 1e-11 * (j + 1) ** 2


def test_invalid_size():
    with pytest.raises(InvalidParameterError):
        build_spin_operators(0)
    with pytest.raises(InvalidParameterError):
        ModelParams(0)


def test_operators_are_read_only():
    ops = build_spin_operators(3)
    with pytest.raises(ValueError):
        ops.sx[0, 0] = 1.0


def test_jump_operator_limits():
    ops = build_spin_operators(6)
    np.testing.assert_allclose(jump_operator(ModelParams(6, theta=0.0)), ops.sm, atol=1e-15)
    np.testing.assert_allclose(jump_operator(ModelParams(6, theta=math.pi / 2)), ops.sp, atol=1e-15)
    d = jump_operator(ModelParams(6, theta=math.pi / 4))
    np.testing.assert_allclose(d, math.sqrt(2) * ops.sx, atol=1e-14)
    assert np.linalg.norm(d @ ops.sx - ops.sx @ d) < 1e-13


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.floats(0.0, math.pi / 2))
def test_ddag_d_positive(n, theta):
    d = jump_operator(ModelParams(n, theta=theta))
    dd = d.conj().T @ d
    np.testing.assert_allclose(dd, dd.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(dd)[0] > -1e-10


def test_eigenbasis_sx_small():
    vals, _ = eigenbasis_matrix(build_spin_operators(2).sx)
    np.testing.assert_allclose(vals, [-1, 0, 1], atol=1e-12)


def test_eigenbasis_sz_is_canonical():
    pairs = hermitian_eigenbasis(build_spin_operators(5).sz)
    np.testing.assert_allclose([p[0] for p in pairs], magnetic_numbers(5), atol=1e-14)
    np.testing.assert_allclose(np.column_stack([p[1] for p in pairs]), np.eye(6), atol=1e-14)


@pytest.mark.parametrize("n", [3, 10, 25])
def test_sx_eigenbasis_residuals(n):
    ops = build_spin_operators(n)
    m, v = sx_eigenbasis(n)
    np.testing.assert_allclose(m, magnetic_numbers(n), atol=1e-12)
    assert np.max(np.abs(ops.sx @ v - v * m[None, :])) < 1e-10
    assert np.max(np.abs(v.conj().T @ v - np.eye(n + 1))) < 1e-10
    assert np.linalg.norm(v @ np.diag(m) @ v.conj().T - ops.sx) < 1e-10


def test_eigenbasis_rejects_non_hermitian():
    with pytest.raises(ContractViolation):
        hermitian_eigenbasis(np.array([[0, 1], [0, 0]], dtype=complex))


def test_coherent_state_poles():
    n = 7
    south = spin_coherent_state(n, 0.0, 0.3)
    north = spin_coherent_state(n, math.pi, 0.3)
    assert abs(abs(south[0]) - 1) < 1e-12
    assert abs(abs(north[-1]) - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.floats(0.0, math.pi), st.floats(-math.pi, math.pi))
def test_coherent_state_mean_spin(n, theta, phi):
    ops = build_spin_operators(n)
    psi = spin_coherent_state(n, theta, phi)
    assert abs(np.linalg.norm(psi) - 1) < 1e-12
    j = n / 2
    mean = [np.vdot(psi, o @ psi).real / j for o in (ops.sx, ops.sy, ops.sz)]
    expect = [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), -math.cos(theta)]
    np.testing.assert_allclose(mean, expect, atol=1e-10)


def test_coherent_state_equator_n20():
    ops = build_spin_operators(20)
    psi = spin_coherent_state(20, math.pi / 2, 0.0)
    assert abs(np.vdot(psi, ops.sx @ psi).real / 10 - 1) < 1e-10


def test_husimi_south_pole_maximum():
    rho = np.zeros((6, 6), dtype=complex)
    rho[0, 0] = 1
    q = husimi_q(rho)
    assert q.argmax()[0] == 0.0
    assert abs(q.values.max() - 1) < 1e-12


def test_husimi_maximally_mixed_is_flat():
    q = husimi_q(np.eye(5) / 5)
    np.testing.assert_allclose(q.values, 0.2, atol=1e-12)


@pytest.mark.parametrize("n", [1, 4, 10])
def test_husimi_normalisation(n, rng):
    rho = random_density(n + 1, rng)
    q = husimi_q(rho, sphere_grid(361, 721))
    assert abs((n + 1) / (4 * math.pi) * q.integrate() - 1) < 1e-3
    assert q.values.min() >= 0 and q.values.max() <= 1 + 1e-12


def test_husimi_peak_at_coherent_direction():
    theta0, phi0 = 1.1, -0.7
    psi = spin_coherent_state(10, theta0, phi0)
    grid = sphere_grid(181, 361)
    q = husimi_q(np.outer(psi, psi.conj()), grid)
    t, p = q.argmax()
    assert abs(t - theta0) <= grid[0][1] - grid[0][0]
    assert abs(p - phi0) <= grid[1][1] - grid[1][0]


def test_husimi_rejects_non_density():
    with pytest.raises(ContractViolation):
        husimi_q(np.eye(3))


def test_husimi_csv(tmp_path):
    q = husimi_q(np.eye(3) / 3, sphere_grid(3, 4))
    path = tmp_path / "q.csv"
    q.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "theta,phi,q"
    assert len(lines) == 1 + 12
