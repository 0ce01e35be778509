"""Reduced density matrices of symmetric states and trace-norm distances.

Marginals are normalized to unit trace.  Row/column indices of a k-particle
matrix enumerate ``(x_1, ..., x_k)`` in row-major order, i.e. the index is
``x_1 d^{k-1} + ... + x_k`` and particle k is the fastest.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatchError, BudgetError
from .fock import SymmetricState, annihilator, to_first_quantized

log = logging.getLogger(__name__)

MAX_RDM_DIMENSION = 4096
MAX_ORACLE_DIMENSION = 100_000


@dataclass(frozen=True, eq=False)
class ReducedDensity:
    k: int
    d: int
    matrix: np.ndarray

    def __post_init__(self):
        dim = self.d**self.k
        if self.matrix.shape != (dim, dim):
            raise BasisMismatchError(f"matrix shape {self.matrix.shape} does not match d**k = {dim}")

    def to_json(self) -> dict:
        m = np.asarray(self.matrix, dtype=complex)
        return {
            "k": self.k,
            "d": self.d,
            "real": m.real.ravel().tolist(),
            "imag": m.imag.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, record: dict) -> "ReducedDensity":
        k, d = int(record["k"]), int(record["d"])
        dim = d**k
        m = np.asarray(record["real"], dtype=float) + 1j * np.asarray(record["imag"], dtype=float)
        return cls(k, d, m.reshape(dim, dim))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def clipped(self) -> np.ndarray:
        """PSD copy: eigenvalues in [-1e-10, 0) are set to 0 and the clip is logged."""
        evals, evecs = np.linalg.eigh(self.matrix)
        neg = evals[evals < 0]
        if neg.size and neg.min() < -1e-10:
            raise ValueError(f"eigenvalue {neg.min():.3e} is below the -1e-10 clipping window")
        if neg.size:
            log.debug("clipped %d negative eigenvalues (most negative %.3e)", neg.size, neg.min())
        evals = np.clip(evals, 0, None)
        return (evecs * evals) @ evecs.conj().T


def _check_budget(d, k):
    if d**k > MAX_RDM_DIMENSION:
        raise BudgetError("rdm_dimension", f"d**k = {d**k} exceeds {MAX_RDM_DIMENSION}")


def annihilated_vectors(state: SymmetricState, k: int) -> np.ndarray:
    """Columns ``a_{p_k} ... a_{p_1} psi`` for every k-tuple, row-major in ``(p_1, ..., p_k)``."""
    d, n = state.basis.d, state.basis.n_particles
    block = np.asarray(state.amplitudes)[:, None]
    for level in range(k):
        parts = [annihilator(d, n - level, p) @ block for p in range(d)]
        block = np.stack(parts, axis=-1).reshape(parts[0].shape[0], -1)
    return block


def k_rdm(state: SymmetricState, k: int) -> ReducedDensity:
    """k-particle marginal from normally ordered correlators.

    ``gamma[P, Q] = <a_Q^+ a_P> / (N! / (N-k)!)`` with ``a_P = a_{p_1}...a_{p_k}``.
    """
    d, n = state.basis.d, state.basis.n_particles
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={n}")
    _check_budget(d, k)
    vecs = annihilated_vectors(state, k)
    falling = math.perm(n, k)
    return ReducedDensity(k, d, (vecs.T @ vecs.conj()) / falling)


def one_rdm(state: SymmetricState) -> ReducedDensity:
    """``gamma[p, q] = <a_q^+ a_p> / N``."""
    return k_rdm(state, 1)


def dense_oracle_rdm(state: SymmetricState, k: int) -> ReducedDensity:
    """Reference marginal: embed in the full tensor space and trace out particles k+1..N.

    For the rank-one ``gamma_N = |psi><psi|`` the partial trace is the
    kernel integral ``sum_{x_{k+1..N}} psi(x_k, y) conj(psi(x'_k, y))``.
    """
    d, n = state.basis.d, state.basis.n_particles
    if d**n > MAX_ORACLE_DIMENSION:
        raise BudgetError("oracle_dimension", f"d**N = {d**n} exceeds {MAX_ORACLE_DIMENSION}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={n}")
    psi = to_first_quantized(state).reshape(d**k, d ** (n - k))
    return ReducedDensity(k, d, psi @ psi.conj().T)


def partial_trace_last(matrix: np.ndarray, d: int) -> np.ndarray:
    """Trace out the last particle of a (k+1)-particle operator."""
    dim = matrix.shape[0] // d
    return np.einsum("ajbj->ab", matrix.reshape(dim, d, dim, d))


def product_projector(phi, k: int) -> np.ndarray:
    """``|phi><phi|^{(x) k}``."""
    phi = np.asarray(phi, dtype=complex)
    vec = phi
    for _ in range(k - 1):
        vec = np.kron(vec, phi)
    return np.outer(vec, vec.conj())


def _as_matrix(x):
    return np.asarray(x.matrix if isinstance(x, ReducedDensity) else x)


def trace_norm(a) -> float:
    """Sum of singular values; valid for non-Hermitian input such as hierarchy defects."""
    return float(np.sum(np.linalg.svd(_as_matrix(a), compute_uv=False)))


def trace_distance(a, b) -> float:
    """``Tr |a - b|`` (no factor 1/2)."""
    if isinstance(a, ReducedDensity) and isinstance(b, ReducedDensity) and (a.k, a.d) != (b.k, b.d):
        raise BasisMismatchError(f"cannot compare (k={a.k}, d={a.d}) with (k={b.k}, d={b.d})")
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise BasisMismatchError(f"shape mismatch {ma.shape} vs {mb.shape}")
    diff = ma - mb
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))
