"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also collected
into the terminal summary) and then asserts the verdict.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from meanfield.bounds import (
    NOISE_FLOOR,
    bbgky_residual,
    commutator_envelope,
    correlation_envelope,
    fit_rate,
    hartree_snapshots,
    infinite_hierarchy_residual,
    main_theorem_envelope,
    many_body_marginals,
)
from meanfield.distinguishable import FullSpaceHamiltonian, FullState, covariance_gap, estimate_commutator, sample_observables
from meanfield.fock import OccupationBasis, hamiltonian, product_state, random_state, to_first_quantized
from meanfield.hartree import hartree_energy, hartree_solve, hartree_trajectory
from meanfield.lattice import build_lattice
from meanfield.propagate import Propagator, PropagatorConfig, energy
from meanfield.rdm import dense_oracle_rdm, k_rdm, product_projector, trace_distance
from meanfield.runner import initial_orbital

pytestmark = pytest.mark.slow

U_SHAPE = "cosine amplitude=0.5"
GRID_V = {
    "cosine": "cosine amplitude=1",
    "cosine-half": "cosine amplitude=0.5 offset=0.25",
    "constant": "constant value=1",
    "zero": "zero",
}
GRID_D = (4, 6)
GRID_N = range(2, 11)
GRID_K = (1, 2)
GRID_T = (0.0, 0.25, 0.5, 1.0)
GRID_SEED = 11


def verdict(number, title, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def main_grid():
    """Distances and envelopes over the whole (d, V, N, k, t) grid, computed once."""
    rows = []
    started = time.perf_counter()
    for d in GRID_D:
        phi = initial_orbital("random", d, GRID_SEED)
        for label, v in GRID_V.items():
            model = build_lattice(d, float(d), U_SHAPE, v)
            orbitals = {t: hartree_solve(model, phi, t).phi for t in GRID_T}
            for n in GRID_N:
                basis = OccupationBasis.get(d, n)
                prop = Propagator(hamiltonian(model, n, basis))
                psi0 = product_state(phi, n, basis)
                for t in GRID_T:
                    state = prop.evolve(psi0, t)
                    for k in GRID_K:
                        dist = trace_distance(k_rdm(state, k), product_projector(orbitals[t], k))
                        env = None
                        if model.lambda_v is not None:
                            env = main_theorem_envelope(k, n, t, model.sup_norm_v, model.lambda_v)
                        rows.append(dict(d=d, v=label, n=n, k=k, t=t, distance=dist, envelope=env))
    return rows, time.perf_counter() - started


def test_criterion_1_main_theorem_envelope(main_grid):
    rows, seconds = main_grid
    checked = [r for r in rows if r["v"] != "zero" and r["t"] > 0]
    worst = max(r["distance"] - r["envelope"] for r in checked)
    tightest = max(r["distance"] / r["envelope"] for r in checked)
    ok = all(r["distance"] <= r["envelope"] + 1e-6 for r in checked) and seconds < 600
    verdict(1, "main-theorem envelope", ok, f"{len(checked)} points, max distance/envelope {tightest:.3e}, max excess {worst:.3e}, {seconds:.0f}s")


def test_criterion_2_one_over_n_rate(main_grid):
    rows, _ = main_grid
    fits, skipped = {}, []
    for d in GRID_D:
        for label in GRID_V:
            if label == "zero":
                continue
            pts = [(r["n"], r["distance"]) for r in rows if (r["d"], r["v"], r["k"], r["t"]) == (d, label, 1, 0.5)]
            if sum(dist > NOISE_FLOOR for _, dist in pts) < 3:
                # a constant pair potential is a c-number on symmetric states: nothing to fit
                skipped.append(f"d={d} {label}")
                continue
            fits[(d, label)] = fit_rate(pts)
    good = {key: f for key, f in fits.items() if -1.25 <= f[0] <= -0.80 and f[2] >= 0.98}
    summary = ", ".join(f"d={d} {lab}: slope {s:.3f} r2 {r2:.4f}" for (d, lab), (s, _, r2) in sorted(fits.items()))
    if skipped:
        summary += "; below noise floor: " + ", ".join(skipped)
    verdict(2, "1/N rate", bool(good), summary)


def test_criterion_3_exact_factorization(main_grid):
    rows, _ = main_grid
    free = max(r["distance"] for r in rows if r["v"] == "zero")
    initial = max(r["distance"] for r in rows if r["t"] == 0.0)
    verdict(3, "exact factorization controls", free <= 1e-9 and initial <= 1e-10, f"V=0 max {free:.2e}, t=0 max {initial:.2e}")


SWEEP_MODELS = {"cosine": "cosine amplitude=1", "gaussian": "gaussian amplitude=0.8 width=0.7"}
SWEEP_N = range(3, 8)
SWEEP_T = (0.25, 0.5, 1.0)
SWEEP_PAIRS = 50
SWEEP_SEED = 5


def sweep_observables(d):
    seq_a, seq_b = np.random.SeedSequence(SWEEP_SEED).spawn(2)
    return sample_observables(d, 1, SWEEP_PAIRS, seq_a), sample_observables(d, 1, SWEEP_PAIRS, seq_b, slots=(2,))


def test_criterion_4_commutator_bound():
    started = time.perf_counter()
    worst_slack, count, unconverged = np.inf, 0, 0
    ok = True
    for v in SWEEP_MODELS.values():
        model = build_lattice(2, 2.0, "cosine amplitude=0.3", v)
        a_obs, b_obs = sweep_observables(2)
        for n in SWEEP_N:
            prop = Propagator(FullSpaceHamiltonian(model, n))
            for t in SWEEP_T:
                env = commutator_envelope(1, 1, n, t, model.sup_norm_v)
                for pair, (a, b) in enumerate(zip(a_obs, b_obs)):
                    est = estimate_commutator(model, n, a, b, t, propagator=prop, seed=pair)
                    # an unconverged estimate is still |C v| for a unit v, hence a valid lower bound
                    unconverged += not est.converged
                    ok &= est.value <= env + 1e-6
                    worst_slack = min(worst_slack, env - est.value)
                    count += 1
    seconds = time.perf_counter() - started
    ok &= seconds < 900
    verdict(4, "commutator bound", ok, f"{count} estimates, min slack {worst_slack:.3e}, {unconverged} unconverged, {seconds:.0f}s")


def test_criterion_5_covariance_bound():
    worst_slack, count, ok = np.inf, 0, True
    for v in SWEEP_MODELS.values():
        model = build_lattice(2, 2.0, "cosine amplitude=0.3", v)
        a_obs, b_obs = sweep_observables(2)
        phi = initial_orbital("random", 2, SWEEP_SEED)
        for n in SWEEP_N:
            prop = Propagator(hamiltonian(model, n))
            psi0 = product_state(phi, n)
            for t in SWEEP_T:
                state = prop.evolve(psi0, t)
                env = correlation_envelope(1, 1, n, t, model.sup_norm_v)
                for a, b in zip(a_obs, b_obs):
                    gap = covariance_gap(state, a, b)
                    ok &= gap <= env + 1e-8
                    worst_slack = min(worst_slack, env - gap)
                    count += 1
    verdict(5, "covariance bound", ok, f"{count} gaps, min slack {worst_slack:.3e}")


HIERARCHY_MODEL = ("cosine amplitude=0.5", "cosine amplitude=1")
HIERARCHY_SEEDS = range(8)
HIERARCHY_WINDOW = 0.5


def _times(dt):
    return np.arange(round(HIERARCHY_WINDOW / dt) + 1) * dt


def test_criterion_6_bbgky_residual():
    model = build_lattice(4, 4.0, *HIERARCHY_MODEL)
    worst, ratios = 0.0, []
    for seed in HIERARCHY_SEEDS:
        phi = initial_orbital("random", 4, seed)
        for n in (2, 3, 4):
            res = [bbgky_residual(_times(dt), *many_body_marginals(model, n, phi, 1, _times(dt)), model, n, 1) for dt in (1e-3, 5e-4)]
            worst = max(worst, res[0])
            ratios.append(res[0] / res[1])
    ok = worst <= 1e-5 and all(3.5 <= r <= 4.5 for r in ratios)
    verdict(6, "BBGKY residual", ok, f"max residual {worst:.3e} at dt=1e-3, halving ratios {min(ratios):.3f}..{max(ratios):.3f}")


def test_criterion_7_infinite_hierarchy_residual():
    model = build_lattice(4, 4.0, *HIERARCHY_MODEL)
    worst, ratios = 0.0, []
    for seed in HIERARCHY_SEEDS:
        phi = initial_orbital("random", 4, seed)
        res = [infinite_hierarchy_residual(_times(dt), hartree_snapshots(model, phi, _times(dt)), model, 1) for dt in (1e-3, 5e-4)]
        worst = max(worst, res[0])
        ratios.append(res[0] / res[1])
    ok = worst <= 1e-5 and all(3.5 <= r <= 4.5 for r in ratios)
    verdict(7, "infinite-hierarchy residual", ok, f"max residual {worst:.3e} at dt=1e-3, halving ratios {min(ratios):.3f}..{max(ratios):.3f}")


def test_criterion_8_oracle_equivalence():
    rdm_err = 0.0
    for case in range(200):
        rng = np.random.default_rng(case)
        d, n = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        state = random_state(OccupationBasis.get(d, n), rng)
        for k in range(1, n + 1):
            rdm_err = max(rdm_err, float(np.max(np.abs(k_rdm(state, k).matrix - dense_oracle_rdm(state, k).matrix))))
    prop_err = 0.0
    for case in range(20):
        rng = np.random.default_rng(1000 + case)
        d, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        model = build_lattice(d, float(d), "gaussian amplitude=0.6 width=1.1", "cosine amplitude=0.9 offset=0.1")
        state = random_state(OccupationBasis.get(d, n), rng)
        t = float(rng.uniform(0.1, 3.0))
        sym = Propagator(hamiltonian(model, n)).evolve(state, t)
        full = Propagator(FullSpaceHamiltonian(model, n), PropagatorConfig(method="krylov")).apply(to_first_quantized(state), t)
        prop_err = max(prop_err, float(np.linalg.norm(full - to_first_quantized(sym))))
    ok = rdm_err <= 1e-12 and prop_err <= 1e-8
    verdict(8, "oracle equivalences", ok, f"RDM max entry error {rdm_err:.2e} over 200 states, propagation l2 error {prop_err:.2e}")


CONSERVATION_TIMES = (1.0, 2.5, 5.0, 7.5, 10.0)


def test_criterion_9_conservation():
    norm_drift = energy_drift = mass_drift = hartree_drift = 0.0
    models = [
        build_lattice(4, 4.0, "cosine amplitude=0.5", "cosine amplitude=1"),
        build_lattice(6, 6.0, "gaussian amplitude=1 width=1.5 center=2", "gaussian amplitude=0.8 width=1"),
    ]
    for model in models:
        phi = initial_orbital("random", model.d, 3)
        for method in ("eig", "krylov"):
            ham = hamiltonian(model, 5)
            prop = Propagator(ham, PropagatorConfig(method=method))
            psi0 = product_state(phi, 5)
            e0 = energy(ham, psi0)
            for t in CONSERVATION_TIMES:
                state = prop.evolve(psi0, t)
                norm_drift = max(norm_drift, abs(state.norm - 1))
                energy_drift = max(energy_drift, abs(energy(ham, state) - e0) / abs(e0))
        h0 = hartree_energy(model, phi)
        for orb in hartree_trajectory(model, phi, CONSERVATION_TIMES, dt=1e-3):
            mass_drift = max(mass_drift, abs(np.linalg.norm(orb.phi) - 1))
        for orb in hartree_trajectory(model, phi, CONSERVATION_TIMES):
            hartree_drift = max(hartree_drift, abs(hartree_energy(model, orb) - h0) / abs(h0))
    ok = norm_drift <= 1e-10 and energy_drift <= 1e-9 and mass_drift <= 1e-10 and hartree_drift <= 1e-8
    verdict(
        9, "conservation", ok,
        f"norm {norm_drift:.1e}, energy {energy_drift:.1e}, Hartree mass {mass_drift:.1e}, Hartree energy {hartree_drift:.1e}",
    )
