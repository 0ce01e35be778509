"""Periodic one-dimensional lattice model.

The single-particle space is C^d with the counting-measure inner product.
The one-body operator is ``h = -Laplacian + U`` with the periodic
three-point second difference scaled by ``(d / period)**2``.  The pair
interaction is stored as ``v_samples[r] = V(r)`` for lattice displacements
``r = 0, ..., d-1`` (periodic, even).

Fourier convention::

    V(r) = sum_q Vhat(q) exp(2 pi i q r / d),   Vhat(q) = (1/d) sum_r V(r) exp(-2 pi i q r / d)

so that ``fourier_l1_v = sum_q |Vhat(q)|``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ModelError

SHAPES = ("zero", "constant", "cosine", "gaussian")

_SHAPE_PARAMS = {
    "zero": {},
    "constant": {"value": 0.0},
    "cosine": {"amplitude": 1.0, "mode": 1.0, "offset": 0.0, "phase": 0.0},
    "gaussian": {"amplitude": 1.0, "width": 1.0, "center": 0.0},
}


@dataclass(frozen=True)
class ShapeSpec:
    """A named potential shape from the catalog plus its numeric parameters.

    Catalog (``x`` is a site index for U, a displacement for V; widths and
    centers are in lattice units):

    ``zero``
        0 everywhere.
    ``constant value=c``
        c everywhere.
    ``cosine amplitude=A mode=m offset=c phase=p``
        ``A cos(2 pi m x / d + p) + c``.  ``phase`` must be 0 for V.
    ``gaussian amplitude=A width=w center=x0``
        ``A exp(-delta**2 / (2 w**2))`` with ``delta`` the periodic distance
        between ``x`` and ``x0`` on the ring.  ``center`` must be 0 for V.
    """

    name: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _SHAPE_PARAMS:
            raise ModelError(f"unknown shape {self.name!r}; catalog is {SHAPES}")
        allowed = _SHAPE_PARAMS[self.name]
        merged = dict(allowed)
        for key, value in dict(self.params).items():
            if key not in allowed:
                raise ModelError(f"shape {self.name!r} has no parameter {key!r}")
            value = float(value)
            if not math.isfinite(value):
                raise ModelError(f"shape {self.name!r}: parameter {key}={value} is not finite")
            merged[key] = value
        object.__setattr__(self, "params", merged)

    @classmethod
    def parse(cls, text: str) -> "ShapeSpec":
        """Parse ``"cosine amplitude=1 mode=1"`` style text."""
        tokens = text.split()
        if not tokens:
            raise ModelError("empty shape specification")
        params = {}
        for tok in tokens[1:]:
            key, sep, value = tok.partition("=")
            if not sep:
                raise ModelError(f"malformed shape parameter {tok!r} (expected key=value)")
            try:
                params[key] = float(value)
            except ValueError:
                raise ModelError(f"shape parameter {key!r} is not a number: {value!r}") from None
        return cls(tokens[0], params)

    def __str__(self):
        parts = [self.name] + [f"{k}={v!r}" for k, v in sorted(self.params.items())]
        return " ".join(parts)

    def sample(self, d: int) -> np.ndarray:
        x = np.arange(d, dtype=float)
        p = self.params
        if self.name == "zero":
            return np.zeros(d)
        if self.name == "constant":
            return np.full(d, p["value"])
        if self.name == "cosine":
            return p["amplitude"] * np.cos(2 * np.pi * p["mode"] * x / d + p["phase"]) + p["offset"]
        # gaussian on the ring
        delta = np.abs(x - p["center"]) % d
        delta = np.minimum(delta, d - delta)
        if p["width"] <= 0:
            raise ModelError("gaussian width must be positive")
        return p["amplitude"] * np.exp(-(delta**2) / (2 * p["width"] ** 2))


def fourier_coefficients(v_samples: np.ndarray) -> np.ndarray:
    """``Vhat(q)`` under ``V(r) = sum_q Vhat(q) exp(2 pi i q r / d)``."""
    v = np.asarray(v_samples)
    return np.fft.fft(v) / v.shape[0]


def laplacian(d: int, period: float) -> np.ndarray:
    """Periodic ``-Laplacian`` (three-point stencil) on ``d`` sites of a ring of length ``period``."""
    lap = np.zeros((d, d))
    idx = np.arange(d)
    np.add.at(lap, (idx, idx), 2.0)
    np.add.at(lap, (idx, (idx + 1) % d), -1.0)
    np.add.at(lap, (idx, (idx - 1) % d), -1.0)
    return lap * (d / period) ** 2


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LatticeModel:
    d: int
    period: float
    kinetic: np.ndarray
    u_samples: np.ndarray
    v_samples: np.ndarray
    sup_norm_v: float
    fourier_l1_v: float
    lambda_v: float | None
    u_spec: ShapeSpec | None = None
    v_spec: ShapeSpec | None = None

    @property
    def interaction_norms(self):
        return interaction_norms(self)

    def pair_potential(self) -> np.ndarray:
        """``W[p, q] = V(p - q)`` as a d x d real matrix."""
        idx = np.arange(self.d)
        return self.v_samples[(idx[:, None] - idx[None, :]) % self.d]

    def convolve(self, density: np.ndarray) -> np.ndarray:
        """Circular convolution ``(V * density)(p) = sum_r V(p - r) density(r)``."""
        return self.pair_potential() @ density

    def describe(self) -> dict:
        return {
            "d": self.d,
            "period": self.period,
            "u": str(self.u_spec) if self.u_spec is not None else None,
            "v": str(self.v_spec) if self.v_spec is not None else None,
            "sup_norm_v": self.sup_norm_v,
            "fourier_l1_v": self.fourier_l1_v,
            "lambda_v": self.lambda_v,
        }

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps({"d": self.d, "period": repr(self.period)}, sort_keys=True).encode())
        for arr in (self.kinetic, self.v_samples):
            h.update(np.ascontiguousarray(arr, dtype=np.complex128).tobytes())
        return h.hexdigest()


def model_from_arrays(kinetic, v_samples, *, period=None, u_samples=None, u_spec=None, v_spec=None):
    """Assemble a model from explicit arrays, checking every invariant."""
    kinetic = np.asarray(kinetic)
    v = np.asarray(v_samples, dtype=float)
    if kinetic.ndim != 2 or kinetic.shape[0] != kinetic.shape[1]:
        raise ModelError("kinetic matrix must be square")
    d = kinetic.shape[0]
    if d < 1:
        raise ModelError("site count d must be at least 1")
    if v.shape != (d,):
        raise ModelError(f"v_samples must have length d={d}")
    if not (np.all(np.isfinite(kinetic)) and np.all(np.isfinite(v))):
        raise ModelError("model arrays contain non-finite values")
    if np.max(np.abs(kinetic - kinetic.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(kinetic))):
        raise ModelError("kinetic matrix is not Hermitian")
    mirror = v[(-np.arange(d)) % d]
    if np.max(np.abs(v - mirror)) > 1e-12 * max(1.0, np.max(np.abs(v))):
        raise ModelError("interaction samples are not even under r -> -r mod d")
    v = 0.5 * (v + mirror)  # exact evenness; removes ulp-level asymmetry of sampled cosines
    if np.isrealobj(kinetic) or np.all(kinetic.imag == 0):
        kinetic = kinetic.real.astype(float)
    sup = float(np.max(np.abs(v)))
    l1 = float(np.sum(np.abs(fourier_coefficients(v))))
    lam = 1.0 + l1 / sup if sup > 0 else None
    if u_samples is None:
        u_samples = np.real(np.diag(kinetic)) * 0
    return LatticeModel(
        d=d,
        period=float(period if period is not None else d),
        kinetic=_frozen(kinetic),
        u_samples=_frozen(np.asarray(u_samples, dtype=float)),
        v_samples=_frozen(v),
        sup_norm_v=sup,
        fourier_l1_v=l1,
        lambda_v=lam,
        u_spec=u_spec,
        v_spec=v_spec,
    )


def _as_spec(spec) -> ShapeSpec:
    if isinstance(spec, ShapeSpec):
        return spec
    if isinstance(spec, str):
        return ShapeSpec.parse(spec)
    raise ModelError(f"cannot interpret {spec!r} as a shape specification")


def build_lattice(d: int, period: float, u_spec, v_spec) -> LatticeModel:
    """Build the lattice model for ``d`` sites on a ring of length ``period``.

    ``u_spec`` and ``v_spec`` are :class:`ShapeSpec` instances or their text
    form, e.g. ``"cosine amplitude=0.5"``.
    """
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ModelError(f"site count must be an integer >= 1, got {d!r}")
    d = int(d)
    period = float(period)
    if not math.isfinite(period) or period <= 0:
        raise ModelError(f"period must be positive and finite, got {period!r}")
    u_spec, v_spec = _as_spec(u_spec), _as_spec(v_spec)
    if v_spec.name == "cosine" and v_spec.params["phase"] != 0:
        raise ModelError("interaction must be even: cosine phase must be 0")
    if v_spec.name == "gaussian" and v_spec.params["center"] != 0:
        raise ModelError("interaction must be even: gaussian center must be 0")
    u = u_spec.sample(d)
    v = v_spec.sample(d)
    kinetic = laplacian(d, period) + np.diag(u)
    return model_from_arrays(kinetic, v, period=period, u_samples=u, u_spec=u_spec, v_spec=v_spec)


def interaction_norms(model: LatticeModel):
    """Return ``(sup_norm_v, fourier_l1_v, lambda_v)``; ``lambda_v`` is None when V vanishes."""
    return model.sup_norm_v, model.fourier_l1_v, model.lambda_v
