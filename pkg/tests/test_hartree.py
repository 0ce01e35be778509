import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_orbital
from meanfield.errors import ModelError
from meanfield.hartree import (
    HartreeOrbital,
    hartree_energy,
    hartree_solve,
    hartree_trajectory,
    kinetic_propagator,
    mean_field,
    trajectory_from_json,
    trajectory_to_json,
)
from meanfield.lattice import build_lattice


@pytest.fixture
def ring6():
    return build_lattice(6, 6.0, "cosine amplitude=0.4", "gaussian amplitude=0.9 width=1.3")


def test_linear_limit_matches_eigendecomposition(rng):
    model = build_lattice(7, 5.0, "gaussian amplitude=1.2 width=1.5 center=3", "zero")
    phi = random_orbital(rng, 7)
    evals, evecs = np.linalg.eigh(model.kinetic)
    expected = evecs @ (np.exp(-1j * evals * 2.5) * (evecs.conj().T @ phi))
    np.testing.assert_allclose(hartree_solve(model, phi, 2.5).phi, expected, atol=1e-9)
    np.testing.assert_allclose(hartree_solve(model, phi, 2.5, dt=0.1).phi, expected, atol=1e-9)


def test_plane_wave_is_stationary():
    d = 8
    model = build_lattice(d, 8.0, "zero", "cosine amplitude=0.7 offset=0.3")
    phi0 = np.full(d, 1 / np.sqrt(d), dtype=complex)
    mu = 0.0 + model.v_samples.sum() / d
    for t in (0.5, 3.0, 10.0):
        phi_t = hartree_solve(model, phi0, t, dt=1e-2).phi
        assert abs(np.vdot(phi_t, phi0)) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(phi_t, np.exp(-1j * mu * t) * phi0, atol=1e-9)
    assert hartree_energy(model, phi0) == pytest.approx(hartree_energy(model, hartree_solve(model, phi0, 4.0).phi), rel=1e-10)


def test_second_order_splitting(ring6, rng):
    phi = random_orbital(rng, 6)
    reference = hartree_solve(ring6, phi, 1.0, dt=1e-4).phi
    errors = [np.linalg.norm(hartree_solve(ring6, phi, 1.0, dt=dt).phi - reference) for dt in (0.04, 0.02, 0.01)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.5 <= coarse / fine <= 4.5


def test_argument_checks(ring6, rng):
    phi = random_orbital(rng, 6)
    with pytest.raises(ValueError):
        hartree_solve(ring6, phi, 1.0, dt=0.0)
    with pytest.raises(ValueError):
        hartree_solve(ring6, phi, 1.0, dt=-1e-3)
    with pytest.raises(ValueError):
        hartree_solve(ring6, 2 * phi, 1.0)
    with pytest.raises(ValueError):
        hartree_solve(ring6, phi, float("inf"))
    with pytest.raises(ModelError):
        hartree_solve(ring6, random_orbital(rng, 5), 1.0)


def test_energy_of_free_eigenvector():
    model = build_lattice(5, 5.0, "cosine amplitude=0.8", "zero")
    evals, evecs = np.linalg.eigh(model.kinetic)
    for j in range(5):
        assert hartree_energy(model, evecs[:, j]) == pytest.approx(evals[j], abs=1e-12)


def test_energy_direct_summation(ring6, rng):
    phi = random_orbital(rng, 6)
    d = 6
    kinetic = 0.0
    for p in range(d):
        for q in range(d):
            kinetic += np.conj(phi[p]) * ring6.kinetic[p, q] * phi[q]
    rho = np.abs(phi) ** 2
    pair = 0.0
    for p in range(d):
        for r in range(d):
            pair += rho[p] * ring6.v_samples[(p - r) % d] * rho[r]
    assert hartree_energy(ring6, phi) == pytest.approx(kinetic.real + 0.5 * pair, abs=1e-13)


def test_mean_field_is_circular_convolution(ring6, rng):
    phi = random_orbital(rng, 6)
    rho = np.abs(phi) ** 2
    direct = [sum(ring6.v_samples[(p - r) % 6] * rho[r] for r in range(6)) for p in range(6)]
    np.testing.assert_allclose(mean_field(ring6, phi), direct, atol=1e-15)


def test_kinetic_propagator_is_unitary(ring6):
    u = kinetic_propagator(ring6, 0.37)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(6), atol=1e-13)


def test_mass_conservation_fixed_step(ring6, rng):
    phi = random_orbital(rng, 6)
    for orb in hartree_trajectory(ring6, phi, [1.0, 5.0, 10.0], dt=1e-3):
        assert abs(np.linalg.norm(orb.phi) - 1) <= 1e-10


def test_energy_conservation_adaptive(ring6, rng):
    phi = random_orbital(rng, 6)
    e0 = hartree_energy(ring6, phi)
    for orb in hartree_trajectory(ring6, phi, [2.0, 6.0, 10.0]):
        assert abs(hartree_energy(ring6, orb) - e0) <= 1e-8 * abs(e0) * orb.time


def test_time_reversal(ring6, rng):
    phi = random_orbital(rng, 6)
    forward = hartree_solve(ring6, phi, 3.0, dt=1e-3)
    back = hartree_solve(ring6, forward, -3.0, dt=1e-3)
    assert np.linalg.norm(back.phi - phi) <= 1e-8
    assert back.time == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), theta=st.floats(0, 2 * np.pi), t=st.floats(-4, 4))
def test_gauge_covariance(seed, theta, t):
    ring6 = build_lattice(6, 6.0, "cosine amplitude=0.4", "gaussian amplitude=0.9 width=1.3")
    phi = random_orbital(np.random.default_rng(seed), 6)
    phase = np.exp(1j * theta)
    a = hartree_solve(ring6, phi, t, dt=1e-2).phi
    b = hartree_solve(ring6, phase * phi, t, dt=1e-2).phi
    assert np.max(np.abs(b - phase * a)) <= 1e-12


def test_trajectory_json_round_trip(ring6, rng):
    traj = hartree_trajectory(ring6, random_orbital(rng, 6), [0.0, 0.5, 1.0], dt=1e-2)
    back = trajectory_from_json(trajectory_to_json(traj))
    assert [o.time for o in back] == [0.0, 0.5, 1.0]
    for a, b in zip(traj, back):
        np.testing.assert_array_equal(a.phi, b.phi)


def test_trajectory_matches_single_solves(ring6, rng):
    phi = random_orbital(rng, 6)
    traj = hartree_trajectory(ring6, phi, [0.25, 0.5], dt=1e-3)
    np.testing.assert_allclose(traj[1].phi, hartree_solve(ring6, phi, 0.5, dt=1e-3).phi, atol=1e-12)
    assert isinstance(traj[0], HartreeOrbital)
