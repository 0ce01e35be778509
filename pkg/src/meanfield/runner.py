"""Experiment runner: sweeps, invariant checks and file emission.

Each kind writes ``<kind>.csv`` (UTF-8, header row, 17 significant
digits) and, with the json format, ``<kind>.json``; every run writes
``manifest.json``.  Rows are sorted by their key columns, so output does
not depend on worker scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    commutator_envelope,
    correlation_envelope,
    fit_rate,
    hartree_snapshots,
    infinite_hierarchy_residual,
    bbgky_residual,
    main_theorem_envelope,
    many_body_marginals,
)
from .config import RunConfig, parse_phi, validate
from .distinguishable import FullSpaceHamiltonian, covariance_gap, estimate_commutator, sample_observables
from .errors import BudgetError
from .fock import OccupationBasis, hamiltonian, product_state
from .hartree import hartree_energy, hartree_solve, hartree_trajectory, trajectory_to_json
from .lattice import build_lattice
from .propagate import Propagator
from .rdm import k_rdm, product_projector, trace_distance

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_VIOLATION = 0, 2, 3, 4

CONVERGENCE_SLACK = 1e-6
COMMUTATOR_SLACK = 1e-6
COVARIANCE_SLACK = 1e-8
ZERO_INTERACTION_TOL = 1e-9

COLUMNS = {
    "convergence": ["seed", "N", "k", "t", "distance", "envelope", "ratio"],
    "commutator": ["seed", "pair", "m", "n", "N", "t", "estimate", "envelope", "slack"],
    "covariance": ["seed", "pair", "m", "n", "N", "t", "gap", "envelope", "slack"],
    "bbgky": ["seed", "k", "N", "dt", "residual"],
    "infinite_hierarchy": ["seed", "k", "dt", "residual"],
    "hartree-only": ["seed", "t", "norm_drift", "energy", "energy_drift"],
}
SORT_KEYS = {
    "convergence": ["seed", "N", "k", "t"],
    "commutator": ["seed", "N", "t", "pair"],
    "covariance": ["seed", "N", "t", "pair"],
    "bbgky": ["seed", "k", "N", "dt"],
    "infinite_hierarchy": ["seed", "k", "dt"],
    "hartree-only": ["seed", "t"],
}


@dataclass
class RunResult:
    exit_code: int
    files: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)


def initial_orbital(spec: str, d: int, seed: int) -> np.ndarray:
    name, params = parse_phi(spec)
    x = np.arange(d, dtype=float)
    if name == "random":
        rng = np.random.default_rng(seed)
        phi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    elif name == "uniform":
        phi = np.ones(d, dtype=complex)
    else:
        center, width = params.get("center", 0.0), params.get("width", 1.0)
        delta = np.abs(x - center) % d
        delta = np.minimum(delta, d - delta)
        phi = np.exp(-(delta**2) / (2 * width**2)) * np.exp(2j * np.pi * params.get("momentum", 0.0) * x / d)
    return phi / np.linalg.norm(phi)


def format_value(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def render_csv(kind: str, rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS[kind])
    for row in rows:
        writer.writerow([format_value(row[c]) for c in COLUMNS[kind]])
    return buf.getvalue()


def _model(cfg):
    return build_lattice(cfg.d, cfg.period, cfg.u, cfg.v)


def _hartree_dt(cfg):
    return cfg.dt[0] if cfg.dt else None


# ---- cells (module level so a process pool can pickle them) ----------------


def _convergence_cell(cfg, seed, n, orbitals):
    model = _model(cfg)
    basis = OccupationBasis.get(model.d, n)
    prop = Propagator(hamiltonian(model, n, basis))
    psi0 = product_state(initial_orbital(cfg.phi, model.d, seed), n, basis)
    rows = []
    for t in cfg.t:
        state = prop.evolve(psi0, t)
        phi_t = orbitals[t]
        for k in cfg.k:
            dist = trace_distance(k_rdm(state, k).matrix, product_projector(phi_t, k))
            env = None
            if model.lambda_v is not None:
                env = main_theorem_envelope(k, n, t, model.sup_norm_v, model.lambda_v)
            ratio = dist / env if env else None
            rows.append({"seed": seed, "N": n, "k": k, "t": t, "distance": dist, "envelope": env, "ratio": ratio})
    return rows


def _pair_observables(cfg, d, seed):
    seq_a, seq_b = np.random.SeedSequence(seed).spawn(2)
    a_obs = sample_observables(d, cfg.arity_a, cfg.pairs, seq_a)
    b_slots = range(cfg.arity_a + 1, cfg.arity_a + cfg.arity_b + 1)
    b_obs = sample_observables(d, cfg.arity_b, cfg.pairs, seq_b, slots=b_slots)
    return a_obs, b_obs


def _commutator_cell(cfg, seed, n, _):
    model = _model(cfg)
    prop = Propagator(FullSpaceHamiltonian(model, n))
    a_obs, b_obs = _pair_observables(cfg, model.d, seed)
    rows = []
    for t in cfg.t:
        for pair, (a, b) in enumerate(zip(a_obs, b_obs)):
            est = estimate_commutator(model, n, a, b, t, propagator=prop, seed=seed * 7919 + pair)
            env = commutator_envelope(a.arity, b.arity, n, t, model.sup_norm_v, a.op_norm, b.op_norm)
            rows.append({"seed": seed, "pair": pair, "m": a.arity, "n": b.arity, "N": n, "t": t,
                         "estimate": est.value, "envelope": env, "slack": env - est.value})
    return rows


def _covariance_cell(cfg, seed, n, _):
    model = _model(cfg)
    basis = OccupationBasis.get(model.d, n)
    prop = Propagator(hamiltonian(model, n, basis))
    psi0 = product_state(initial_orbital(cfg.phi, model.d, seed), n, basis)
    a_obs, b_obs = _pair_observables(cfg, model.d, seed)
    rows = []
    for t in cfg.t:
        state = prop.evolve(psi0, t)
        for pair, (a, b) in enumerate(zip(a_obs, b_obs)):
            gap = covariance_gap(state, a.matrix, b.matrix)
            env = correlation_envelope(a.arity, b.arity, n, t, model.sup_norm_v, a.op_norm, b.op_norm)
            rows.append({"seed": seed, "pair": pair, "m": a.arity, "n": b.arity, "N": n, "t": t,
                         "gap": gap, "envelope": env, "slack": env - gap})
    return rows


def _bbgky_spacings(cfg):
    return cfg.dt if cfg.dt else [1e-3, 5e-4]


def _grid(window, dt):
    steps = int(round(window / dt))
    return np.arange(steps + 1) * dt


def _bbgky_cell(cfg, seed, n, _):
    model = _model(cfg)
    phi = initial_orbital(cfg.phi, model.d, seed)
    rows = []
    for k in cfg.k:
        for dt in _bbgky_spacings(cfg):
            times = _grid(cfg.window, dt)
            gk, gk1 = many_body_marginals(model, n, phi, k, times)
            rows.append({"seed": seed, "k": k, "N": n, "dt": dt, "residual": bbgky_residual(times, gk, gk1, model, n, k)})
    return rows


CELLS = {
    "convergence": _convergence_cell,
    "commutator": _commutator_cell,
    "covariance": _covariance_cell,
    "bbgky": _bbgky_cell,
}


def _timed(func, cfg, args):
    start = time.perf_counter()
    rows = func(cfg, *args)
    return rows, time.perf_counter() - start


def _run_cells(cfg, func, jobs):
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_timed, [func] * len(jobs), [cfg] * len(jobs), [args for _, args in jobs]))
    else:
        outcomes = [_timed(func, cfg, args) for _, args in jobs]
    rows = [row for cell_rows, _ in outcomes for row in cell_rows]
    timings = {key: seconds for (key, _), (_, seconds) in zip(jobs, outcomes)}
    return rows, timings


def _sorted(kind, rows):
    keys = SORT_KEYS[kind]
    return sorted(rows, key=lambda r: tuple(r[k] for k in keys))


def _fits(rows):
    """Log-log slope of distance against N for every (seed, k, t) group."""
    groups = {}
    for r in rows:
        groups.setdefault((r["seed"], r["k"], r["t"]), []).append((r["N"], r["distance"]))
    out = []
    for (seed, k, t), pts in sorted(groups.items()):
        above = [p for p in pts if p[1] > 1e-9]
        if len(above) < 3:
            continue
        slope, intercept, r2 = fit_rate(above)
        out.append({"seed": seed, "k": k, "t": t, "slope": slope, "intercept": intercept, "r2": r2})
    return out


def execute(cfg: RunConfig) -> RunResult:
    """Validate, compute and write.  Never raises for config or budget problems."""
    problems = validate(cfg)
    if problems:
        code = EXIT_CONFIG if any(p.kind == "config" for p in problems) else EXIT_BUDGET
        return RunResult(code, errors=[p.as_dict() for p in problems])
    started = time.perf_counter()
    try:
        tables, extra, timings = _compute(cfg)
    except BudgetError as exc:
        return RunResult(EXIT_BUDGET, errors=[{"field": exc.guard, "message": str(exc), "kind": "budget"}])
    model = _model(cfg)
    violations = _violations(cfg, model, tables)

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for kind, rows in tables.items():
        if "csv" in cfg.formats:
            path = outdir / f"{kind}.csv"
            path.write_text(render_csv(kind, rows), encoding="utf-8")
            files.append(str(path))
        if "json" in cfg.formats:
            path = outdir / f"{kind}.json"
            payload = {"columns": COLUMNS[kind], "rows": [{c: r[c] for c in COLUMNS[kind]} for r in rows]}
            path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
            files.append(str(path))
    for name, payload in extra.items():
        path = outdir / name
        path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
        files.append(str(path))

    manifest = {
        "tool": "meanfield",
        "version": __version__,
        "config_digest": cfg.digest,
        "config": cfg.canonical(),
        "model": dict(model.describe(), digest=model.digest()),
        "outputs": sorted(Path(f).name for f in files),
        "violations": violations,
        "wall_times": {"total": time.perf_counter() - started, "cells": timings},
    }
    if "convergence" in tables:
        manifest["fits"] = _fits(tables["convergence"])
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    files.append(str(path))
    code = EXIT_VIOLATION if violations else EXIT_OK
    return RunResult(code, files=files, violations=violations, tables=tables)


def _compute(cfg):
    model = _model(cfg)
    tables, extra, timings = {}, {}, {}
    kind = cfg.kind
    if kind == "hartree-only":
        rows = []
        for seed in cfg.seeds:
            phi = initial_orbital(cfg.phi, model.d, seed)
            e0 = hartree_energy(model, phi)
            traj = hartree_trajectory(model, phi, cfg.t, _hartree_dt(cfg))
            for orb in traj:
                energy = hartree_energy(model, orb)
                rows.append({"seed": seed, "t": orb.time, "norm_drift": abs(np.linalg.norm(orb.phi) - 1.0),
                             "energy": energy, "energy_drift": abs(energy - e0) / max(abs(e0), 1e-300)})
            extra[f"hartree_trajectory_seed{seed}.json"] = trajectory_to_json(traj)
        tables[kind] = _sorted(kind, rows)
        return tables, extra, timings

    jobs = []
    for seed in cfg.seeds:
        orbitals = None
        if kind == "convergence":
            phi = initial_orbital(cfg.phi, model.d, seed)
            orbitals = {t: hartree_solve(model, phi, t, _hartree_dt(cfg)).phi for t in cfg.t}
        for n in cfg.n:
            jobs.append((f"seed={seed},N={n}", (seed, n, orbitals)))
    rows, timings = _run_cells(cfg, CELLS[kind], jobs)
    tables[kind] = _sorted(kind, rows)
    if kind == "bbgky":
        inf_rows = []
        for seed in cfg.seeds:
            phi = initial_orbital(cfg.phi, model.d, seed)
            for k in cfg.k:
                for dt in _bbgky_spacings(cfg):
                    times = _grid(cfg.window, dt)
                    orbs = hartree_snapshots(model, phi, times)
                    residual = infinite_hierarchy_residual(times, orbs, model, k)
                    inf_rows.append({"seed": seed, "k": k, "dt": dt, "residual": residual})
        tables["infinite_hierarchy"] = _sorted("infinite_hierarchy", inf_rows)
    return tables, extra, timings


def _violations(cfg, model, tables):
    found = []
    for row in tables.get("convergence", []):
        if model.lambda_v is None:
            if row["distance"] > ZERO_INTERACTION_TOL:
                found.append({"kind": "convergence", "row": _key(row, "convergence"),
                              "message": f"V = 0 but distance {row['distance']:.3e} > {ZERO_INTERACTION_TOL}"})
        elif row["distance"] > row["envelope"] + CONVERGENCE_SLACK:
            found.append({"kind": "convergence", "row": _key(row, "convergence"), "message": "distance exceeds envelope"})
    for row in tables.get("commutator", []):
        if row["estimate"] > row["envelope"] + COMMUTATOR_SLACK:
            found.append({"kind": "commutator", "row": _key(row, "commutator"), "message": "estimate exceeds envelope"})
    for row in tables.get("covariance", []):
        if row["gap"] > row["envelope"] + COVARIANCE_SLACK:
            found.append({"kind": "covariance", "row": _key(row, "covariance"), "message": "gap exceeds envelope"})
    return found


def _key(row, kind):
    return {k: row[k] for k in SORT_KEYS[kind]}
