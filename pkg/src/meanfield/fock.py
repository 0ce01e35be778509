"""Occupation-number representation of the N-boson symmetric subspace.

Basis states are occupation vectors ``(n_1, ..., n_d)`` with ``sum n_p = N``
listed in reverse-lexicographic (descending) order, so ``(N, 0, ..., 0)``
has index 0 and ``(0, ..., 0, N)`` is last.  Ranking uses the
stars-and-bars count of the vectors that precede a given one, which is
O(d) per vector and needs no hash table.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import BasisMismatchError, BudgetError, ModelError
from .lattice import LatticeModel

log = logging.getLogger(__name__)

INDEX_LIMIT = np.iinfo(np.int64).max
MATRIX_FREE_THRESHOLD = 200_000
MAX_FOCK_DIMENSION = 5_000_000
NORM_DRIFT_TOL = 1e-10


def basis_dimension(d: int, n: int) -> int:
    """Number of occupation vectors of ``n`` bosons on ``d`` sites, ``C(d+n-1, n)``."""
    if d < 1 or n < 0:
        raise ValueError(f"need d >= 1 and n >= 0, got d={d}, n={n}")
    dim = math.comb(d + n - 1, n)
    if dim > INDEX_LIMIT:
        raise OverflowError(f"basis dimension C({d + n - 1}, {n}) exceeds the int64 index range")
    return dim


@lru_cache(maxsize=None)
def _binomial_table(top: int) -> np.ndarray:
    table = np.zeros((top + 1, top + 1), dtype=np.int64)
    for a in range(top + 1):
        for b in range(a + 1):
            table[a, b] = math.comb(a, b)
    return table


def _enumerate(d: int, n: int) -> np.ndarray:
    @lru_cache(maxsize=None)
    def block(sites, total):
        if sites == 1:
            return np.array([[total]], dtype=np.int64)
        parts = []
        for first in range(total, -1, -1):
            rest = block(sites - 1, total - first)
            head = np.full((rest.shape[0], 1), first, dtype=np.int64)
            parts.append(np.hstack([head, rest]))
        return np.vstack(parts)

    return block(d, n)


class OccupationBasis:
    """Ordered occupation basis for ``n_particles`` bosons on ``d`` sites.

    Use :meth:`get` to share instances; bases are immutable.
    """

    def __init__(self, d: int, n_particles: int):
        self.d = int(d)
        self.n_particles = int(n_particles)
        self.dim = basis_dimension(self.d, self.n_particles)
        if self.dim > MAX_FOCK_DIMENSION:
            raise BudgetError("fock_dimension", f"C(d+N-1, N) = {self.dim} exceeds {MAX_FOCK_DIMENSION}")
        self._binom = _binomial_table(self.d + self.n_particles)
        self.states = _enumerate(self.d, self.n_particles)
        self.states.setflags(write=False)

    @classmethod
    @lru_cache(maxsize=64)
    def get(cls, d: int, n_particles: int) -> "OccupationBasis":
        return cls(d, n_particles)

    def __len__(self):
        return self.dim

    def __repr__(self):
        return f"OccupationBasis(d={self.d}, n_particles={self.n_particles}, dim={self.dim})"

    def ranks(self, occupations) -> np.ndarray:
        """Vectorized rank of an ``(M, d)`` array of occupation vectors."""
        occ = np.atleast_2d(np.asarray(occupations, dtype=np.int64))
        if occ.shape[1] != self.d:
            raise BasisMismatchError(f"occupation vectors must have {self.d} entries")
        remaining = self.n_particles - np.cumsum(occ, axis=1) + occ
        idx = np.zeros(occ.shape[0], dtype=np.int64)
        for p in range(self.d - 1):
            s = self.d - p - 1
            gap = remaining[:, p] - occ[:, p]
            ok = gap >= 1
            top = np.where(ok, gap - 1 + s, 0)
            idx += np.where(ok, self._binom[top, s], 0)
        return idx

    def rank(self, occupation) -> int:
        occ = np.asarray(occupation, dtype=np.int64)
        if occ.shape != (self.d,) or occ.min() < 0 or occ.sum() != self.n_particles:
            raise ValueError(f"{tuple(occupation)} is not an occupation vector of this basis")
        return int(self.ranks(occ[None, :])[0])

    def unrank(self, index: int) -> tuple:
        if not 0 <= index < self.dim:
            raise IndexError(index)
        occ = []
        remaining = self.n_particles
        for p in range(self.d - 1):
            s = self.d - p - 1
            # largest count first; skip blocks until the index falls inside one
            for value in range(remaining, -1, -1):
                size = int(self._binom[remaining - value + s - 1, s - 1])
                if index < size:
                    break
                index -= size
            occ.append(value)
            remaining -= value
        occ.append(remaining)
        return tuple(occ)


@dataclass(frozen=True, eq=False)
class SymmetricState:
    basis: OccupationBasis
    amplitudes: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def with_amplitudes(self, amplitudes) -> "SymmetricState":
        return replace(self, amplitudes=np.asarray(amplitudes))


def product_state(phi, n: int, basis: OccupationBasis | None = None) -> SymmetricState:
    """Symmetric image of ``phi^{(x) n}``.

    The amplitude on occupation vector ``m`` is
    ``sqrt(N! / prod m_p!) * prod phi_p**m_p``.
    """
    phi = np.asarray(phi, dtype=complex)
    if abs(np.linalg.norm(phi) - 1.0) > 1e-12:
        raise ValueError(f"phi must be normalized, |phi| = {np.linalg.norm(phi)!r}")
    if basis is None:
        basis = OccupationBasis.get(phi.shape[0], n)
    if basis.d != phi.shape[0] or basis.n_particles != n:
        raise BasisMismatchError("phi / n do not match the basis")
    occ = basis.states
    log_multinomial = gammaln(n + 1) - gammaln(occ + 1.0).sum(axis=1)
    amps = np.sqrt(np.exp(log_multinomial)) * np.prod(phi[None, :] ** occ, axis=1)
    return SymmetricState(basis, amps)


def basis_state(basis: OccupationBasis, occupation) -> SymmetricState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.rank(occupation)] = 1.0
    return SymmetricState(basis, amps)


def random_state(basis: OccupationBasis, rng) -> SymmetricState:
    v = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    return SymmetricState(basis, v / np.linalg.norm(v))


@lru_cache(maxsize=256)
def annihilator(d: int, n: int, p: int) -> sp.csr_matrix:
    """Sparse matrix of ``a_p`` from the n-particle to the (n-1)-particle basis."""
    src = OccupationBasis.get(d, n)
    dst = OccupationBasis.get(d, n - 1)
    occ = src.states
    rows = np.flatnonzero(occ[:, p] > 0)
    shifted = occ[rows].copy()
    shifted[:, p] -= 1
    targets = dst.ranks(shifted)
    coeff = np.sqrt(occ[rows, p].astype(float))
    return sp.csr_matrix((coeff, (targets, rows)), shape=(dst.dim, src.dim))


def _hops(model: LatticeModel, basis: OccupationBasis):
    """Yield ``(coefficient, source_rows, target_rows)`` for every nonzero off-diagonal ``h_pq a_p^+ a_q``."""
    occ = basis.states
    for p in range(model.d):
        for q in range(model.d):
            if p == q or model.kinetic[p, q] == 0:
                continue
            rows = np.flatnonzero(occ[:, q] > 0)
            if rows.size == 0:
                continue
            shifted = occ[rows].copy()
            shifted[:, q] -= 1
            shifted[:, p] += 1
            targets = basis.ranks(shifted)
            amp = np.sqrt(occ[rows, q] * (occ[rows, p] + 1.0))
            yield model.kinetic[p, q] * amp, rows, targets


def diagonal_energies(model: LatticeModel, basis: OccupationBasis) -> np.ndarray:
    """Diagonal of H_N: one-body ``sum_p h_pp n_p`` plus the full pair interaction.

    The pair term is ``(1/2N) [sum_{p != q} V(p-q) n_p n_q + V(0) sum_p n_p (n_p - 1)]``.
    """
    n = basis.n_particles
    occ = basis.states.astype(float)
    one_body = occ @ np.real(np.diag(model.kinetic))
    if n == 0:
        return one_body
    w = model.pair_potential()
    quad = np.einsum("ip,pq,iq->i", occ, w, occ)
    return one_body + (quad - model.v_samples[0] * n) / (2.0 * n)


class FockHamiltonian:
    """``H_N`` restricted to the symmetric subspace.

    Assembled as CSR when the dimension is at most ``matrix_free_threshold``;
    otherwise :meth:`matvec` recomputes the hopping action on the fly.
    """

    def __init__(self, model: LatticeModel, basis: OccupationBasis, *, matrix_free_threshold=MATRIX_FREE_THRESHOLD):
        if model.d != basis.d:
            raise BasisMismatchError(f"model has d={model.d} but basis has d={basis.d}")
        self.model = model
        self.basis = basis
        self.n_particles = basis.n_particles
        self.dim = basis.dim
        self.shape = (self.dim, self.dim)
        self.diagonal = diagonal_energies(model, basis)
        self.dtype = np.result_type(model.kinetic.dtype, float)
        self.matrix = None
        if self.dim <= matrix_free_threshold:
            self.matrix = self._assemble()

    def _assemble(self) -> sp.csr_matrix:
        rows = [np.arange(self.dim)]
        cols = [np.arange(self.dim)]
        vals = [self.diagonal.astype(self.dtype)]
        for coeff, src, dst in _hops(self.model, self.basis):
            rows.append(dst)
            cols.append(src)
            vals.append(coeff)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=self.shape,
            dtype=self.dtype,
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.dim:
            raise BasisMismatchError(f"vector has length {x.shape[0]}, basis dimension is {self.dim}")
        if self.matrix is not None:
            return self.matrix @ x
        return self.matrix_free_matvec(x)

    def matrix_free_matvec(self, x: np.ndarray) -> np.ndarray:
        diag = self.diagonal if x.ndim == 1 else self.diagonal[:, None]
        out = (diag * x).astype(np.result_type(x, self.dtype))
        for coeff, src, dst in _hops(self.model, self.basis):
            c = coeff if x.ndim == 1 else coeff[:, None]
            np.add.at(out, dst, c * x[src])
        return out

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.toarray()
        return self.matrix_free_matvec(np.eye(self.dim, dtype=self.dtype))


def hamiltonian(model: LatticeModel, n: int, basis: OccupationBasis | None = None, **kwargs) -> FockHamiltonian:
    """Second-quantized ``H_N = sum_pq h_pq a_p^+ a_q + (1/N) sum_{i<j} V(x_i - x_j)``."""
    if basis is None:
        basis = OccupationBasis.get(model.d, n)
    if basis.n_particles != n:
        raise BasisMismatchError(f"basis holds {basis.n_particles} particles, not {n}")
    if n < 1:
        raise ModelError("need at least one particle")
    return FockHamiltonian(model, basis, **kwargs)


def apply_hamiltonian(ham: FockHamiltonian, state: SymmetricState) -> np.ndarray:
    """Matrix-free ``H_N psi`` (no assembled matrix is touched)."""
    if state.basis is not ham.basis and (
        state.basis.d != ham.basis.d or state.basis.n_particles != ham.basis.n_particles
    ):
        raise BasisMismatchError("state and Hamiltonian live on different bases")
    return ham.matrix_free_matvec(np.asarray(state.amplitudes))


def number_expectation(state: SymmetricState) -> float:
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ state.basis.states.sum(axis=1))


def configurations(d: int, n: int) -> np.ndarray:
    """All ``d**n`` particle configurations ``(x_1, ..., x_n)`` in row-major order."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((d,) * n).reshape(n, -1).T
    return grids.astype(np.int64)


def to_first_quantized(state: SymmetricState) -> np.ndarray:
    """Embed a symmetric state as a vector on ``(C^d)^{(x) N}`` (length ``d**N``).

    ``psi(x_1..x_N) = c_m / sqrt(N! / prod m_p!)`` where ``m`` is the
    occupation vector of the configuration.
    """
    basis = state.basis
    d, n = basis.d, basis.n_particles
    configs = configurations(d, n)
    occ = np.zeros((configs.shape[0], d), dtype=np.int64)
    for j in range(n):
        occ[np.arange(configs.shape[0]), configs[:, j]] += 1
    log_multinomial = gammaln(n + 1) - gammaln(occ + 1.0).sum(axis=1)
    return np.asarray(state.amplitudes)[basis.ranks(occ)] / np.sqrt(np.exp(log_multinomial))


def from_first_quantized(psi: np.ndarray, basis: OccupationBasis) -> SymmetricState:
    """Project a full-space vector onto the symmetric subspace (inverse of the embedding on symmetric input)."""
    d, n = basis.d, basis.n_particles
    configs = configurations(d, n)
    occ = np.zeros((configs.shape[0], d), dtype=np.int64)
    for j in range(n):
        occ[np.arange(configs.shape[0]), configs[:, j]] += 1
    log_multinomial = gammaln(n + 1) - gammaln(occ + 1.0).sum(axis=1)
    weights = np.asarray(psi) / np.sqrt(np.exp(log_multinomial))
    amps = np.zeros(basis.dim, dtype=complex)
    np.add.at(amps, basis.ranks(occ), weights)
    return SymmetricState(basis, amps)
