"""Closed-form envelopes, hierarchy residuals and 1/N rate fits."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .fock import OccupationBasis, hamiltonian, product_state
from .hartree import hartree_trajectory
from .lattice import LatticeModel
from .propagate import Propagator, PropagatorConfig
from .rdm import k_rdm, product_projector, trace_norm

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-9


@dataclass(frozen=True)
class ExperimentRecord:
    n_particles: int
    k: int
    t: float
    distance: float
    envelope: float | None
    slope_group: str
    seed: int
    model_digest: str

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("distance must be nonnegative")
        if self.envelope is not None and self.envelope < 0:
            raise ValueError("envelope must be nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)


def main_theorem_envelope(k: int, n_particles: int, t: float, sup_norm_v: float, lambda_v: float | None) -> float:
    """``(k^2 lambda_V / N) e^{2k|V|} (e^{8|V||t|} - 1)``."""
    if lambda_v is None:
        raise ValueError("lambda_V is undefined for a vanishing interaction")
    return (k * k * lambda_v / n_particles) * math.exp(2 * k * sup_norm_v) * math.expm1(8 * sup_norm_v * abs(t))


def commutator_envelope(m: int, n: int, n_particles: int, t: float, sup_norm_v: float, norm_a: float = 1.0, norm_b: float = 1.0) -> float:
    """``(m n |A| |B| / N) (e^{4|V||t|} - 1)``."""
    return (m * n * norm_a * norm_b / n_particles) * math.expm1(4 * sup_norm_v * abs(t))


def correlation_envelope(m: int, n: int, n_particles: int, t: float, sup_norm_v: float, norm_a: float = 1.0, norm_b: float = 1.0) -> float:
    """``(m n |A| |B| / N) (e^{8|V||t|} - 1)``."""
    return (m * n * norm_a * norm_b / n_particles) * math.expm1(8 * sup_norm_v * abs(t))


def _one_body_sum(h: np.ndarray, k: int) -> np.ndarray:
    d = h.shape[0]
    total = np.zeros((d**k, d**k), dtype=np.result_type(h, float))
    for j in range(k):
        total += np.kron(np.kron(np.eye(d**j), h), np.eye(d ** (k - j - 1)))
    return total


def _k_configurations(d, k):
    return np.indices((d,) * k).reshape(k, -1).T


def hierarchy_rhs(model: LatticeModel, k: int, gamma_k: np.ndarray, gamma_k1: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Right-hand side of the marginal hierarchy.

    ``sum_j [h_j, g_k] + inner * sum_{i<j<=k} [V_ij, g_k]
    + outer * sum_{j<=k} Tr_{k+1} [V_{j,k+1}, g_{k+1}]``.
    BBGKY uses ``inner = 1/N`` and ``outer = (N-k)/N``; the infinite
    hierarchy uses ``inner = 0`` and ``outer = 1``.
    """
    d = model.d
    one = _one_body_sum(model.kinetic, k)
    out = one @ gamma_k - gamma_k @ one
    configs = _k_configurations(d, k)
    if inner and k > 1:
        w = np.zeros(d**k)
        for i in range(k):
            for j in range(i + 1, k):
                w += model.v_samples[(configs[:, i] - configs[:, j]) % d]
        out = out + inner * (w[:, None] - w[None, :]) * gamma_k
    if outer:
        # dsum[P, y] = sum_j V(x_j - y)
        dsum = np.zeros((d**k, d))
        y = np.arange(d)
        for j in range(k):
            dsum += model.v_samples[(configs[:, j][:, None] - y[None, :]) % d]
        g = np.einsum("ayby->aby", gamma_k1.reshape(d**k, d, d**k, d))
        out = out + outer * (np.einsum("ay,aby->ab", dsum, g) - np.einsum("by,aby->ab", dsum, g))
    return out


def _uniform_spacing(times):
    times = np.asarray(times, dtype=float)
    if times.shape[0] < 3:
        raise ValueError("need at least 3 snapshots for a centered difference")
    steps = np.diff(times)
    dt = steps[0]
    if not dt > 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(times[-1])):
        raise ValueError("snapshots must be ascending and uniformly spaced")
    return dt


def _residual(times, gamma_k, gamma_k1, model, k, inner, outer):
    dt = _uniform_spacing(times)
    gamma_k = np.asarray(gamma_k)
    gamma_k1 = np.asarray(gamma_k1)
    worst = 0.0
    for i in range(1, len(times) - 1):
        lhs = 1j * (gamma_k[i + 1] - gamma_k[i - 1]) / (2 * dt)
        rhs = hierarchy_rhs(model, k, gamma_k[i], gamma_k1[i], inner, outer)
        worst = max(worst, trace_norm(lhs - rhs))
    return worst


def bbgky_residual(times, gamma_k, gamma_k1, model: LatticeModel, n_particles: int, k: int) -> float:
    """Max over interior snapshots of the trace-norm BBGKY defect.

    ``gamma_k`` and ``gamma_k1`` are stacks of k- and (k+1)-particle
    marginals at the uniformly spaced ``times``; the time derivative is a
    centered difference, so the residual is O(dt^2).
    """
    if not k < n_particles:
        raise ValueError(f"need k < N, got k={k}, N={n_particles}")
    return _residual(times, gamma_k, gamma_k1, model, k, 1.0 / n_particles, (n_particles - k) / n_particles)


def infinite_hierarchy_residual(times, orbitals, model: LatticeModel, k: int) -> float:
    """Defect of the factorized ansatz ``|phi_t><phi_t|^{(x)k}`` in the infinite hierarchy."""
    phis = [getattr(o, "phi", o) for o in orbitals]
    gk = np.stack([product_projector(p, k) for p in phis])
    gk1 = np.stack([product_projector(p, k + 1) for p in phis])
    return _residual(times, gk, gk1, model, k, 0.0, 1.0)


def many_body_marginals(model: LatticeModel, n_particles: int, phi, k: int, times, cfg: PropagatorConfig | None = None):
    """Stacks of ``gamma^(k)`` and ``gamma^(k+1)`` along the N-body evolution of ``phi^{(x)N}``."""
    basis = OccupationBasis.get(model.d, n_particles)
    prop = Propagator(hamiltonian(model, n_particles, basis), cfg)
    psi0 = product_state(phi, n_particles, basis)
    gk, gk1 = [], []
    for t in times:
        state = prop.evolve(psi0, t)
        gk.append(k_rdm(state, k).matrix)
        gk1.append(k_rdm(state, k + 1).matrix)
    return np.stack(gk), np.stack(gk1)


def hartree_snapshots(model: LatticeModel, phi, times, substeps: int = 4):
    """Hartree orbitals on a uniform grid, ``substeps`` Strang steps per spacing.

    Tying the integrator step to the spacing keeps the splitting defect
    O(spacing^2), so the residual keeps its second-order signature.
    """
    dt = _uniform_spacing(times) / substeps
    return hartree_trajectory(model, phi, times, dt * (1 + 1e-12))


def fit_rate(points):
    """Least squares of ``log distance`` on ``log N``.

    Points with distance <= 1e-9 are dropped with a warning.  Returns
    ``(slope, intercept, r_squared)``.
    """
    pts = [(float(n), float(dist)) for n, dist in points]
    kept = [(n, dist) for n, dist in pts if dist > NOISE_FLOOR]
    if len(kept) < len(pts):
        log.warning("fit_rate: dropped %d points at or below the %.0e noise floor", len(pts) - len(kept), NOISE_FLOOR)
    if len(kept) < 3:
        raise ValueError(f"need at least 3 points above the noise floor, have {len(kept)}")
    x = np.log([n for n, _ in kept])
    y = np.log([dist for _, dist in kept])
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_res <= 1e-30 else 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(intercept), float(r2)
