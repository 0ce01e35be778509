"""Unitary time evolution ``exp(-i H t)``.

Two routes: a cached dense eigendecomposition (used automatically when the
dimension is at most ``dense_threshold``) and Lanczos-Krylov stepping with
an a-posteriori local error estimate and step halving.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import ConvergenceError
from .fock import NORM_DRIFT_TOL

log = logging.getLogger(__name__)

METHODS = ("auto", "eig", "krylov")


@dataclass(frozen=True)
class PropagatorConfig:
    method: str = "auto"
    krylov_dim: int = 30
    step_tol: float = 1e-12
    max_step: float = 1.0
    dense_threshold: int = 4000
    max_substeps: int = 1_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.krylov_dim < 4:
            raise ValueError("krylov_dim must be at least 4")
        if not self.step_tol > 0:
            raise ValueError("step_tol must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


class _Operator:
    def __init__(self, ham):
        if isinstance(ham, np.ndarray):
            self.matvec = ham.__matmul__
            self.dim = ham.shape[0]
            self._dense = lambda: ham
        elif sp.issparse(ham):
            self.matvec = ham.__matmul__
            self.dim = ham.shape[0]
            self._dense = ham.toarray
        else:
            self.matvec = ham.matvec
            self.dim = ham.shape[0]
            self._dense = getattr(ham, "to_dense", None) or (lambda: ham.matvec(np.eye(self.dim)))

    def dense(self):
        return np.asarray(self._dense())


def _amplitudes(state):
    return np.asarray(getattr(state, "amplitudes", state))


def _rewrap(state, amplitudes):
    if hasattr(state, "with_amplitudes"):
        return state.with_amplitudes(amplitudes)
    return amplitudes


class Propagator:
    """Reusable ``exp(-i H t)`` for one Hamiltonian.

    ``ham`` may be a dense array, a sparse matrix, or any object with
    ``matvec`` and ``shape`` (and optionally ``to_dense``).
    """

    def __init__(self, ham, cfg: PropagatorConfig | None = None):
        self.cfg = cfg or PropagatorConfig()
        self.op = _Operator(ham)
        method = self.cfg.method
        if method == "auto":
            method = "eig" if self.op.dim <= self.cfg.dense_threshold else "krylov"
        self.method = method
        self.eigenvalues = self.eigenvectors = None
        if method == "eig":
            self.eigenvalues, self.eigenvectors = la.eigh(self.op.dense())
        self.substeps = 0

    def apply(self, x: np.ndarray, t: float) -> np.ndarray:
        """Return ``exp(-i H t) x`` for a vector or a block of column vectors."""
        if not np.isfinite(t):
            raise ValueError(f"time must be finite, got {t!r}")
        x = np.asarray(x)
        if t == 0:
            return x.astype(complex, copy=True)
        if self.method == "eig":
            vecs = self.eigenvectors
            phase = np.exp(-1j * self.eigenvalues * t)
            coeff = vecs.conj().T @ x
            coeff = coeff * (phase if x.ndim == 1 else phase[:, None])
            return vecs @ coeff
        if x.ndim == 1:
            return self._krylov(x.astype(complex), t)
        return np.column_stack([self._krylov(col.astype(complex), t) for col in x.T])

    def evolve(self, state, t: float):
        psi = self.apply(_amplitudes(state), t)
        return _rewrap(state, check_norm(psi, "evolved state"))

    def _krylov(self, v: np.ndarray, t: float) -> np.ndarray:
        cfg = self.cfg
        sign = 1.0 if t > 0 else -1.0
        remaining = abs(t)
        trial = min(cfg.max_step, remaining)
        steps = 0
        while remaining > 0:
            if steps >= cfg.max_substeps:
                raise ConvergenceError(f"Krylov propagation needed more than {cfg.max_substeps} substeps")
            beta0 = np.linalg.norm(v)
            if beta0 == 0:
                return v
            basis, alpha, beta, exact = _lanczos(self.op.matvec, v / beta0, cfg.krylov_dim)
            evals, evecs = la.eigh_tridiagonal(alpha, beta[: len(alpha) - 1])
            tau = min(trial, remaining)
            while True:
                y = evecs @ (np.exp(-1j * sign * tau * evals) * evecs[0, :].conj())
                err = 0.0 if exact else beta0 * beta[-1] * abs(y[-1])
                if err <= cfg.step_tol:
                    break
                tau *= 0.5
                if tau < 1e-14 * abs(t):
                    raise ConvergenceError("Krylov step size underflow")
            v = beta0 * (basis[:, : len(alpha)] @ y)
            remaining -= tau
            if remaining < 1e-15 * abs(t):
                remaining = 0.0
            steps += 1
            trial = min(cfg.max_step, 2 * tau) if tau == trial or exact else tau
        self.substeps += steps
        return v


def _lanczos(matvec, v0, m):
    """Lanczos with full reorthogonalization.

    Returns ``(basis, alpha, beta, exact)``; ``beta`` has one entry per
    column of the tridiagonal block, the last being the residual coupling.
    ``exact`` flags a happy breakdown (invariant subspace found).
    """
    n = v0.shape[0]
    m = min(m, n)
    basis = np.zeros((n, m + 1), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    basis[:, 0] = v0
    scale = 0.0
    for j in range(m):
        w = np.asarray(matvec(basis[:, j]), dtype=complex)
        alpha[j] = np.vdot(basis[:, j], w).real
        w -= basis[:, : j + 1] @ (basis[:, : j + 1].conj().T @ w)
        w -= basis[:, : j + 1] @ (basis[:, : j + 1].conj().T @ w)
        beta[j] = np.linalg.norm(w)
        scale = max(scale, abs(alpha[j]), beta[j])
        if beta[j] <= 1e-13 * max(scale, 1.0) or j + 1 == n:
            return basis, alpha[: j + 1], beta[: j + 1], True
        basis[:, j + 1] = w / beta[j]
    return basis, alpha, beta, False


def check_norm(psi: np.ndarray, where: str) -> np.ndarray:
    """Renormalize only on drift beyond 1e-10, with a log line."""
    if psi.ndim != 1:
        return psi
    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > NORM_DRIFT_TOL:
        log.warning("%s: norm drift %.3e, renormalizing", where, drift)
        return psi / np.linalg.norm(psi)
    return psi


def evolve(hamiltonian, state, t: float, cfg: PropagatorConfig | None = None):
    """``exp(-i H t) state``.

    Builds a fresh :class:`Propagator`; for many times with one Hamiltonian
    keep a Propagator and call :meth:`Propagator.evolve` instead.
    """
    return Propagator(hamiltonian, cfg).evolve(state, t)


def energy(hamiltonian, state) -> float:
    """``<psi, H psi>``; raises if the imaginary part is not at rounding level."""
    psi = _amplitudes(state)
    op = _Operator(hamiltonian)
    value = np.vdot(psi, op.matvec(psi))
    if abs(value.imag) > 1e-12 * max(1.0, abs(value.real)):
        raise ValueError(f"expectation value has imaginary part {value.imag:.3e}; operator not Hermitian?")
    return float(value.real)
