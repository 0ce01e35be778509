"""Run configuration: an INI-style file with ``[model]``, ``[experiment]``, ``[output]``.

Grammar (``#`` and ``;`` start comments; lists are whitespace separated)::

    [model]
    d = 4                          # sites, integer >= 1
    period = 4.0                   # ring length, > 0
    u = cosine amplitude=0.5       # external potential, catalog shape
    v = cosine amplitude=1         # pair interaction, catalog shape

    [experiment]
    kind = convergence             # convergence | commutator | covariance | bbgky | hartree-only
    n = 2 3 4 5 6                  # particle numbers
    k = 1 2                        # marginal orders (convergence, bbgky)
    t = 0.25 0.5 1.0               # ascending times
    seeds = 7                      # mandatory; one run per seed
    phi = random                   # initial orbital: random | uniform | gaussian center=.. width=.. momentum=..
    dt = auto                      # Hartree step, or snapshot spacings for bbgky (list)
    pairs = 50                     # observable pairs (commutator, covariance)
    arity_a = 1                    # m
    arity_b = 1                    # n
    window = 0.5                   # bbgky trajectory length
    workers = 1                    # process pool size

    [output]
    directory = results
    formats = csv json

Only ``OUTPUT_DIR`` in the environment overrides anything (the output directory).
"""
from __future__ import annotations

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, field

from . import distinguishable, fock, rdm
from .errors import ModelError
from .lattice import ShapeSpec

KINDS = ("convergence", "commutator", "covariance", "bbgky", "hartree-only")
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    kind: str = "config"  # or "budget"

    def as_dict(self):
        return {"field": self.field, "message": self.message, "kind": self.kind}

    def __str__(self):
        return f"{self.field}: {self.message}"


@dataclass
class RunConfig:
    d: int | None = None
    period: float | None = None
    u: str = "zero"
    v: str = "zero"
    kind: str | None = None
    n: list = field(default_factory=list)
    k: list = field(default_factory=lambda: [1])
    t: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    phi: str = "random"
    dt: list | None = None
    pairs: int = 50
    arity_a: int = 1
    arity_b: int = 1
    window: float = 0.5
    workers: int = 1
    directory: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json"])
    text: str = ""
    parse_errors: list = field(default_factory=list)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    @property
    def output_dir(self) -> str:
        return os.environ.get("OUTPUT_DIR") or self.directory

    def canonical(self) -> dict:
        return {
            "model": {"d": self.d, "period": self.period, "u": self.u, "v": self.v},
            "experiment": {
                "kind": self.kind, "n": self.n, "k": self.k, "t": self.t, "seeds": self.seeds,
                "phi": self.phi, "dt": self.dt, "pairs": self.pairs, "arity_a": self.arity_a,
                "arity_b": self.arity_b, "window": self.window, "workers": self.workers,
            },
            "output": {"directory": self.directory, "formats": self.formats},
        }

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls(text=text)
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            cfg.parse_errors.append(Violation("file", f"unparseable: {exc}".splitlines()[0]))
            return cfg
        known = {"model", "experiment", "output"}
        for section in parser.sections():
            if section not in known:
                cfg.parse_errors.append(Violation(section, "unknown section"))
        for section in ("model", "experiment"):
            if not parser.has_section(section):
                cfg.parse_errors.append(Violation(section, "missing section"))

        def get(section, key, convert, default=None, many=False):
            if not parser.has_option(section, key):
                return default
            raw = parser.get(section, key).strip()
            try:
                if many:
                    return [convert(tok) for tok in raw.split()]
                return convert(raw)
            except (TypeError, ValueError):
                cfg.parse_errors.append(Violation(f"{section}.{key}", f"cannot parse {raw!r}"))
                return default

        allowed = {
            "model": {"d", "period", "u", "v"},
            "experiment": {"kind", "n", "k", "t", "seeds", "phi", "dt", "pairs", "arity_a", "arity_b", "window", "workers"},
            "output": {"directory", "formats"},
        }
        for section in known & set(parser.sections()):
            for key in parser.options(section):
                if key not in allowed[section]:
                    cfg.parse_errors.append(Violation(f"{section}.{key}", "unknown key"))

        cfg.d = get("model", "d", _int)
        cfg.period = get("model", "period", float)
        cfg.u = get("model", "u", str, "zero")
        cfg.v = get("model", "v", str, "zero")
        cfg.kind = get("experiment", "kind", str)
        cfg.n = get("experiment", "n", _int, [], many=True)
        cfg.k = get("experiment", "k", _int, [1], many=True)
        cfg.t = get("experiment", "t", float, [], many=True)
        cfg.seeds = get("experiment", "seeds", _int, [], many=True)
        cfg.phi = get("experiment", "phi", str, "random")
        dt_raw = get("experiment", "dt", str, "auto")
        if dt_raw.strip().lower() != "auto":
            try:
                cfg.dt = [float(tok) for tok in dt_raw.split()]
            except ValueError:
                cfg.parse_errors.append(Violation("experiment.dt", f"cannot parse {dt_raw!r}"))
        cfg.pairs = get("experiment", "pairs", _int, 50)
        cfg.arity_a = get("experiment", "arity_a", _int, 1)
        cfg.arity_b = get("experiment", "arity_b", _int, 1)
        cfg.window = get("experiment", "window", float, 0.5)
        cfg.workers = get("experiment", "workers", _int, 1)
        cfg.directory = get("output", "directory", str, "results")
        cfg.formats = get("output", "formats", str, ["csv", "json"], many=True)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(text)
    return int(value)


def parse_phi(spec: str):
    """Split an initial-orbital spec into ``(name, params)``."""
    tokens = spec.split()
    params = {}
    for tok in tokens[1:]:
        key, _, value = tok.partition("=")
        params[key] = float(value)
    return tokens[0], params


def validate(cfg: RunConfig) -> list[Violation]:
    """Schema and size-guard check; performs no physics."""
    out = list(cfg.parse_errors)
    if cfg.d is None:
        out.append(Violation("model.d", "missing"))
    elif cfg.d < 1:
        out.append(Violation("model.d", "must be >= 1"))
    if cfg.period is None:
        out.append(Violation("model.period", "missing"))
    elif not (math.isfinite(cfg.period) and cfg.period > 0):
        out.append(Violation("model.period", "must be positive and finite"))
    for key in ("u", "v"):
        try:
            spec = ShapeSpec.parse(getattr(cfg, key))
            if key == "v" and cfg.d:
                spec_v = spec.sample(cfg.d)
                mirror = spec_v[[(-r) % cfg.d for r in range(cfg.d)]]
                if max(abs(spec_v - mirror)) > 1e-12 * max(1.0, max(abs(spec_v))):
                    out.append(Violation("model.v", "interaction is not even under r -> -r"))
        except ModelError as exc:
            out.append(Violation(f"model.{key}", str(exc)))

    if cfg.kind is None:
        out.append(Violation("experiment.kind", "missing"))
    elif cfg.kind not in KINDS:
        out.append(Violation("experiment.kind", f"must be one of {', '.join(KINDS)}"))
    if not cfg.seeds:
        out.append(Violation("experiment.seeds", "at least one seed is required"))
    elif any(s < 0 for s in cfg.seeds):
        out.append(Violation("experiment.seeds", "seeds must be nonnegative"))
    if not cfg.t:
        out.append(Violation("experiment.t", "empty time grid"))
    elif any(not math.isfinite(x) for x in cfg.t) or any(b <= a for a, b in zip(cfg.t, cfg.t[1:])):
        out.append(Violation("experiment.t", "time grid must be finite and strictly ascending"))
    needs_n = cfg.kind != "hartree-only"
    if needs_n and not cfg.n:
        out.append(Violation("experiment.n", "empty particle-number list"))
    if any(n < 1 for n in cfg.n):
        out.append(Violation("experiment.n", "particle numbers must be >= 1"))
    if not cfg.k:
        out.append(Violation("experiment.k", "empty k list"))
    elif any(k < 1 for k in cfg.k):
        out.append(Violation("experiment.k", "k must be >= 1"))
    if cfg.kind == "convergence" and cfg.n and cfg.k and max(cfg.k) > min(cfg.n):
        out.append(Violation("experiment.k", f"k = {max(cfg.k)} exceeds N = {min(cfg.n)}"))
    if cfg.kind == "bbgky" and cfg.n and cfg.k and min(cfg.n) < max(cfg.k) + 1:
        out.append(Violation("experiment.n", "bbgky runs need N >= max(k) + 1"))
    if cfg.kind in ("commutator", "covariance"):
        if cfg.arity_a < 1 or cfg.arity_b < 1:
            out.append(Violation("experiment.arity_a", "observable arities must be >= 1"))
        elif cfg.n and cfg.arity_a + cfg.arity_b > min(cfg.n):
            out.append(Violation("experiment.n", "need N >= arity_a + arity_b"))
        if cfg.pairs < 1:
            out.append(Violation("experiment.pairs", "must be >= 1"))
    if cfg.dt is not None:
        if not cfg.dt or any(not (x > 0 and math.isfinite(x)) for x in cfg.dt):
            out.append(Violation("experiment.dt", "steps must be positive"))
    if cfg.kind == "bbgky" and not (cfg.window > 0):
        out.append(Violation("experiment.window", "must be positive"))
    if cfg.workers < 1:
        out.append(Violation("experiment.workers", "must be >= 1"))
    try:
        name, params = parse_phi(cfg.phi)
        if name not in ("random", "uniform", "gaussian"):
            out.append(Violation("experiment.phi", "must be random, uniform or gaussian"))
        elif name == "gaussian" and params.get("width", 1.0) <= 0:
            out.append(Violation("experiment.phi", "gaussian width must be positive"))
    except (ValueError, IndexError):
        out.append(Violation("experiment.phi", f"cannot parse {cfg.phi!r}"))
    if not cfg.formats or any(f not in FORMATS for f in cfg.formats):
        out.append(Violation("output.formats", f"formats must be drawn from {FORMATS}"))
    if any(v.kind == "config" for v in out):
        return out
    return out + budget_violations(cfg)


def budget_violations(cfg: RunConfig) -> list[Violation]:
    out = []
    d = cfg.d
    if cfg.kind == "hartree-only":
        return out
    for n in cfg.n:
        try:
            dim = fock.basis_dimension(d, n)
        except OverflowError:
            dim = math.inf
        if dim > fock.MAX_FOCK_DIMENSION:
            out.append(Violation("fock_dimension", f"C(d+N-1, N) = {dim} exceeds {fock.MAX_FOCK_DIMENSION} at N={n}", "budget"))
    orders = list(cfg.k)
    if cfg.kind == "bbgky":
        orders = [k + 1 for k in cfg.k]
    if cfg.kind == "covariance":
        orders = [cfg.arity_a + cfg.arity_b]
    for k in orders:
        if d**k > rdm.MAX_RDM_DIMENSION:
            out.append(Violation("rdm_dimension", f"d**k = {d**k} exceeds {rdm.MAX_RDM_DIMENSION} at k={k}", "budget"))
    if cfg.kind == "commutator":
        for n in cfg.n:
            if d**n > distinguishable.MATRIX_FREE_LIMIT:
                out.append(Violation("full_space_dimension", f"d**N = {d**n} exceeds {distinguishable.MATRIX_FREE_LIMIT} at N={n}", "budget"))
    return out
