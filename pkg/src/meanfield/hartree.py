"""Lattice Hartree flow ``i d/dt phi = h phi + (V * |phi|^2) phi``.

The convolution is circular over the ring, includes the ``r = 0`` term and
carries no 1/N.  Integration is Strang splitting: exact kinetic half steps
from a cached eigendecomposition of ``h`` around an exact diagonal
mean-field phase.  Both sub-flows are unitary, so the norm is preserved to
rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, ModelError
from .lattice import LatticeModel

DEFAULT_DT = 1e-3
REFINE_TOL = 1e-8
MAX_REFINEMENTS = 12


@dataclass(frozen=True, eq=False)
class HartreeOrbital:
    d: int
    phi: np.ndarray
    time: float = 0.0

    @classmethod
    def from_vector(cls, phi, time=0.0) -> "HartreeOrbital":
        phi = np.asarray(phi, dtype=complex)
        if abs(np.linalg.norm(phi) - 1.0) > 1e-10:
            raise ValueError(f"orbital must be normalized, |phi| = {np.linalg.norm(phi)!r}")
        return cls(phi.shape[0], phi, float(time))

    def projector(self) -> np.ndarray:
        return np.outer(self.phi, self.phi.conj())


@lru_cache(maxsize=32)
def _kinetic_spectrum(model: LatticeModel):
    return np.linalg.eigh(model.kinetic)


def kinetic_propagator(model: LatticeModel, tau: float) -> np.ndarray:
    """``exp(-i h tau)`` as a dense d x d matrix."""
    evals, evecs = _kinetic_spectrum(model)
    return (evecs * np.exp(-1j * evals * tau)) @ evecs.conj().T


def mean_field(model: LatticeModel, phi: np.ndarray) -> np.ndarray:
    """Hartree potential ``(V * |phi|^2)(p) = sum_r V(p - r) |phi_r|^2``."""
    return model.convolve(np.abs(phi) ** 2)


def _strang(model, phi, t, dt):
    steps = max(1, math.ceil(abs(t) / dt - 1e-12))
    h = t / steps
    pot = model.pair_potential()
    half = kinetic_propagator(model, h / 2)
    full = kinetic_propagator(model, h)
    phi = half @ phi
    for step in range(steps):
        phi = phi * np.exp(-1j * h * (pot @ (phi.real**2 + phi.imag**2)))
        phi = (full if step < steps - 1 else half) @ phi
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("non-finite values in Hartree integration")
    return phi


def _as_orbital(phi0) -> HartreeOrbital:
    if isinstance(phi0, HartreeOrbital):
        return phi0
    return HartreeOrbital.from_vector(phi0)


def hartree_solve(model: LatticeModel, phi0, t: float, dt: float | None = None) -> HartreeOrbital:
    """Evolve ``phi0`` by time ``t`` (either sign).

    With ``dt=None`` the step starts at 1e-3 and is halved until two
    successive refinements agree to 1e-8 in l2; the finer one is returned.
    """
    orb = _as_orbital(phi0)
    if orb.d != model.d:
        raise ModelError(f"orbital has {orb.d} sites, model has {model.d}")
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if t == 0:
        return HartreeOrbital(orb.d, orb.phi.copy(), orb.time)
    if dt is not None:
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        return HartreeOrbital(orb.d, _strang(model, orb.phi, t, dt), orb.time + t)
    step = DEFAULT_DT
    coarse = _strang(model, orb.phi, t, step)
    for _ in range(MAX_REFINEMENTS):
        step /= 2
        fine = _strang(model, orb.phi, t, step)
        if np.linalg.norm(fine - coarse) <= REFINE_TOL:
            return HartreeOrbital(orb.d, fine, orb.time + t)
        coarse = fine
    raise ConvergenceError(f"Hartree refinement did not reach {REFINE_TOL} by dt={step:.2e}")


def hartree_trajectory(model: LatticeModel, phi0, times, dt: float | None = None) -> list[HartreeOrbital]:
    """Orbitals at each of the ascending ``times`` (relative to ``phi0.time``).

    Each interval between consecutive times is integrated separately with
    step at most ``dt`` (or by the adaptive rule when ``dt`` is None).
    """
    orb = _as_orbital(phi0)
    out = []
    current, clock = orb, 0.0
    for t in times:
        current = hartree_solve(model, current, t - clock, dt) if t != clock else current
        clock = t
        out.append(HartreeOrbital(orb.d, current.phi, orb.time + t))
    return out


def hartree_energy(model: LatticeModel, orbital) -> float:
    """``<phi, h phi> + 1/2 <|phi|^2, V * |phi|^2>``."""
    phi = orbital.phi if isinstance(orbital, HartreeOrbital) else np.asarray(orbital)
    rho = np.abs(phi) ** 2
    value = np.vdot(phi, model.kinetic @ phi) + 0.5 * rho @ model.convolve(rho)
    return float(value.real)


def trajectory_to_json(orbitals) -> list[dict]:
    return [
        {"time": o.time, "real": o.phi.real.tolist(), "imag": o.phi.imag.tolist()}
        for o in orbitals
    ]


def trajectory_from_json(records) -> list[HartreeOrbital]:
    out = []
    for rec in records:
        phi = np.asarray(rec["real"], dtype=float) + 1j * np.asarray(rec["imag"], dtype=float)
        out.append(HartreeOrbital(phi.shape[0], phi, float(rec["time"])))
    return out
