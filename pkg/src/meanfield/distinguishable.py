"""Dynamics on the full tensor space (C^d)^{(x) N}.

Observables attached to particular particle slots break permutation
symmetry, so the commutator growth estimate runs here rather than in the
occupation basis.  Particle slots are labelled 1..N.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import BasisMismatchError, BudgetError
from .fock import SymmetricState, configurations
from .lattice import LatticeModel
from .propagate import Propagator, PropagatorConfig
from .rdm import k_rdm

SPARSE_LIMIT = 200_000
MATRIX_FREE_LIMIT = 2_000_000


def _check_budget(d, n):
    dim = d**n
    if dim > MATRIX_FREE_LIMIT:
        raise BudgetError("full_space_dimension", f"d**N = {dim} exceeds {MATRIX_FREE_LIMIT}")
    return dim


@dataclass(frozen=True, eq=False)
class FullState:
    d: int
    n: int
    amplitudes: np.ndarray

    def with_amplitudes(self, amplitudes) -> "FullState":
        return replace(self, amplitudes=np.asarray(amplitudes))

    @classmethod
    def product(cls, phi, n: int) -> "FullState":
        phi = np.asarray(phi, dtype=complex)
        vec = np.ones(1, dtype=complex)
        for _ in range(n):
            vec = np.kron(vec, phi)
        return cls(phi.shape[0], n, vec)


def pair_interaction_diagonal(model: LatticeModel, n: int) -> np.ndarray:
    """``(1/N) sum_{i<j} V(x_i - x_j)`` on every configuration."""
    configs = configurations(model.d, n)
    out = np.zeros(configs.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            out += model.v_samples[(configs[:, i] - configs[:, j]) % model.d]
    return out / n


class FullSpaceHamiltonian:
    """``H_N`` on distinguishable particles, applied by one-body axis sweeps plus a diagonal pair term."""

    def __init__(self, model: LatticeModel, n: int):
        self.model = model
        self.d = model.d
        self.n = n
        self.dim = _check_budget(model.d, n)
        self.shape = (self.dim, self.dim)
        self.diagonal = pair_interaction_diagonal(model, n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.dim:
            raise BasisMismatchError(f"vector length {x.shape[0]} != d**N = {self.dim}")
        batch = x.shape[1:]
        tensor = x.reshape((self.d,) * self.n + batch)
        out = (self.diagonal.reshape((self.d,) * self.n + (1,) * len(batch)) * tensor).astype(
            np.result_type(x, self.model.kinetic)
        )
        for axis in range(self.n):
            out += np.moveaxis(np.tensordot(self.model.kinetic, tensor, axes=([1], [axis])), 0, axis)
        return out.reshape(x.shape)

    def to_sparse(self) -> sp.csr_matrix:
        if self.dim > SPARSE_LIMIT:
            raise BudgetError("full_space_sparse", f"d**N = {self.dim} exceeds {SPARSE_LIMIT}")
        h = sp.csr_matrix(self.model.kinetic)
        total = sp.diags(self.diagonal).tocsr().astype(np.result_type(self.model.kinetic, float))
        for j in range(self.n):
            left = sp.identity(self.d**j, format="csr")
            right = sp.identity(self.d ** (self.n - j - 1), format="csr")
            total = total + sp.kron(sp.kron(left, h), right, format="csr")
        return total.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def full_evolve(model: LatticeModel, n: int, state: FullState, t: float, cfg: PropagatorConfig | None = None) -> FullState:
    """``exp(-i H_N t)`` on the full tensor space."""
    if state.d != model.d or state.n != n:
        raise BasisMismatchError("state does not live on (C^d)^N for this model")
    return Propagator(FullSpaceHamiltonian(model, n), cfg).evolve(state, t)


@dataclass(frozen=True, eq=False)
class SlotObservable:
    """An m-particle operator placed on particles ``slots`` (1-based, increasing)."""

    matrix: np.ndarray
    slots: tuple
    op_norm: float = field(default=None)

    def __post_init__(self):
        slots = tuple(int(s) for s in self.slots)
        if any(b <= a for a, b in zip(slots, slots[1:])) or not slots or slots[0] < 1:
            raise ValueError(f"slots must be strictly increasing labels >= 1, got {slots}")
        object.__setattr__(self, "slots", slots)
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        d = round(m.shape[0] ** (1 / len(slots)))
        if m.shape != (d ** len(slots),) * 2:
            raise BasisMismatchError(f"matrix shape {m.shape} does not fit arity {len(slots)}")
        if self.op_norm is None:
            object.__setattr__(self, "op_norm", float(la.norm(m, 2)))

    @property
    def arity(self) -> int:
        return len(self.slots)

    @property
    def d(self) -> int:
        return round(self.matrix.shape[0] ** (1 / self.arity))

    def at(self, slots) -> "SlotObservable":
        return SlotObservable(self.matrix, slots, self.op_norm)

    def adjoint(self) -> "SlotObservable":
        return SlotObservable(self.matrix.conj().T, self.slots, self.op_norm)

    def apply(self, x: np.ndarray, n: int) -> np.ndarray:
        """Apply ``A^{[slots]}`` to a full-space vector or block of column vectors."""
        d, m = self.d, self.arity
        if self.slots[-1] > n:
            raise ValueError(f"slot {self.slots[-1]} out of range for N={n}")
        batch = x.shape[1:]
        tensor = x.reshape((d,) * n + batch)
        axes = [s - 1 for s in self.slots]
        moved = np.moveaxis(tensor, axes, range(m))
        rest = moved.shape[m:]
        out = (self.matrix @ moved.reshape(d**m, -1)).reshape((d,) * m + rest)
        return np.moveaxis(out, range(m), axes).reshape(x.shape)

    def full_matrix(self, n: int) -> np.ndarray:
        return self.apply(np.eye(self.d**n, dtype=complex), n)


@dataclass(frozen=True)
class CommutatorEstimate:
    """Power-iteration result.  ``value`` is ``|C v|`` for a unit ``v`` and so a lower bound on ``|C|``."""

    value: float
    residual: float
    iterations: int
    converged: bool


def estimate_commutator(
    model: LatticeModel,
    n: int,
    a: SlotObservable,
    b: SlotObservable,
    t: float,
    cfg: PropagatorConfig | None = None,
    *,
    tol: float = 1e-4,
    max_iter: int = 300,
    restarts: int = 3,
    seed: int = 0,
    propagator: Propagator | None = None,
) -> CommutatorEstimate:
    """Estimate ``|| [A^{[i]}, e^{iHt} B^{[j]} e^{-iHt}] ||`` by power iteration on ``C^+ C``.

    The ``restarts`` random starts are iterated together as one block with
    a Rayleigh-Ritz step, so a near-degenerate top pair of singular values
    does not stall convergence.  Iteration stops once the leading Ritz
    vector satisfies ``|C^+C v - rho v| <= tol * rho``; ``value`` is
    ``|C v|`` for that unit ``v``.
    """
    if set(a.slots) & set(b.slots):
        raise ValueError(f"slot sets {a.slots} and {b.slots} overlap")
    if a.d != model.d or b.d != model.d:
        raise BasisMismatchError("observable site count differs from the model")
    prop = propagator or Propagator(FullSpaceHamiltonian(model, n), cfg)
    a_adj, b_adj = a.adjoint(), b.adjoint()

    def heisenberg(obs, v):
        return prop.apply(obs.apply(prop.apply(v, t), n), -t)

    def c(v):
        return a.apply(heisenberg(b, v), n) - heisenberg(b, a.apply(v, n))

    def c_adj(v):
        return heisenberg(b_adj, a_adj.apply(v, n)) - a_adj.apply(heisenberg(b_adj, v), n)

    dim = model.d**n
    rng = np.random.default_rng(seed)
    block = rng.standard_normal((dim, restarts)) + 1j * rng.standard_normal((dim, restarts))
    scale = a.op_norm * b.op_norm
    sigma, residual, converged = 0.0, np.inf, False
    for it in range(1, max_iter + 1):
        q, _ = np.linalg.qr(block)
        cq = c(q)
        rho, rot = np.linalg.eigh(cq.conj().T @ cq)
        rot = rot[:, ::-1]
        v, cv = q @ rot, cq @ rot
        sigma = float(np.linalg.norm(cv[:, 0]))
        block = c_adj(cv)
        if sigma <= 1e-14 * scale:
            # commutator vanishes to rounding
            return CommutatorEstimate(sigma, float(np.linalg.norm(block[:, 0])), it, True)
        residual = float(np.linalg.norm(block[:, 0] - sigma**2 * v[:, 0]))
        converged = residual <= tol * sigma**2
        if converged:
            break
    return CommutatorEstimate(sigma, residual, it, converged)


def commutator_norm(model, n, a, b, t, cfg=None, **kwargs) -> float:
    """Lower-bound estimate of the commutator norm; see :func:`estimate_commutator`."""
    return estimate_commutator(model, n, a, b, t, cfg, **kwargs).value


def _arity(dim, d):
    m = 1
    while d**m < dim:
        m += 1
    if d**m != dim:
        raise BasisMismatchError(f"observable dimension {dim} is not a power of d={d}")
    return m


def covariance_gap(state: SymmetricState, a, b) -> float:
    """``|Tr (A (x) B)(gamma^(m+n) - gamma^(m) (x) gamma^(n))|`` for a symmetric state.

    ``a`` and ``b`` are m- and n-particle matrices (or SlotObservables).
    """
    a = np.asarray(getattr(a, "matrix", a))
    b = np.asarray(getattr(b, "matrix", b))
    d = state.basis.d
    m, k = _arity(a.shape[0], d), _arity(b.shape[0], d)
    if m + k > state.basis.n_particles:
        raise ValueError(f"m + n = {m + k} exceeds N = {state.basis.n_particles}")
    joint = k_rdm(state, m + k).matrix
    g_m = k_rdm(state, m).matrix
    g_n = k_rdm(state, k).matrix
    ab = np.kron(a, b)
    value = np.trace(ab @ joint) - np.trace(a @ g_m) * np.trace(b @ g_n)
    return float(abs(value))


def sample_observables(d: int, m: int, count: int, seed: int, slots=None) -> list[SlotObservable]:
    """Seeded Hermitian m-particle observables with unit spectral norm.

    Slots default to ``(1, ..., m)``.
    """
    rng = np.random.default_rng(seed)
    slots = tuple(slots) if slots is not None else tuple(range(1, m + 1))
    dim = d**m
    out = []
    for _ in range(count):
        g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        h = 0.5 * (g + g.conj().T)
        h /= la.norm(h, 2)
        # unit by construction; the nominal 1.0 keeps envelopes reproducible from (m, n, N, t)
        out.append(SlotObservable(h, slots, 1.0))
    return out
