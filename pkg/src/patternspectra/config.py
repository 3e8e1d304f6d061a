"""Run configuration: YAML on disk, a nested dataclass in memory."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import yaml

from .errors import ConfigError

SUITES = ("paper", "quick", "full")


@dataclass
class Tolerances:
    newton_tol: float = 1e-10
    gap_tol: float = 1e-6
    xi0: float = 0.2          # low-frequency radius for the symbol reduction
    h: float = 1e-3           # finite-difference step in xi
    theta: float = 1e-3       # diffusivity threshold
    step_tol: float = 1e-6    # step-halving monitor for the simulator


@dataclass
class SeedSpec:
    kind: str = "turing"      # turing | plane_waves | constant
    eps: float = 0.5
    state: Optional[list] = None
    continuation: list = field(default_factory=list)   # [{param: value}, ...] applied in order


@dataclass
class SimulateSpec:
    m: int = 8
    dt: float = 0.02
    T: float = 2.0
    stepper: str = "etdrk4"
    eps: float = 1e-6
    xi: list = field(default_factory=list)   # integer sectors j, xi = 2 pi j / m
    source: dict = field(default_factory=lambda: {"amplitude": 0.2, "width": 2.0, "pair_offset": [3.0, 0.0],
                                                   "components": [0]})
    compare_m: int = 16
    compare_T: float = 4.0


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"name": "brusselator", "params": {"a": 1.0, "b": 5.0}})
    N: int = 16
    K: list = field(default_factory=lambda: [[0.3236, 0.0], [0.0, 0.3236]])
    c: list = field(default_factory=lambda: [0.0, 0.0])
    seed: SeedSpec = field(default_factory=SeedSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    modulation: Optional[dict] = None       # explicit A1, A2, B11, B12, B22 (skips the wave)
    suite: str = "paper"
    simulate: SimulateSpec = field(default_factory=SimulateSpec)
    out: str = "out"
    rng_seed: int = 0

    def validate(self) -> "RunConfig":
        for f in fields(Tolerances):
            v = getattr(self.tolerances, f.name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerance {f.name} must be positive, got {v!r}")
        if self.suite not in SUITES:
            raise ConfigError(f"suite must be one of {SUITES}, got {self.suite!r}")
        if not isinstance(self.model, dict) or "name" not in self.model:
            raise ConfigError("model needs a name")
        try:
            K = [[float(v) for v in row] for row in self.K]
            if len(K) != 2 or any(len(r) != 2 for r in K):
                raise ValueError
        except (TypeError, ValueError):
            raise ConfigError("K must be a 2 x 2 list") from None
        if len(self.c) != 2:
            raise ConfigError("c must have two entries")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_NESTED = {"seed": SeedSpec, "tolerances": Tolerances, "simulate": SimulateSpec}


def from_dict(data: dict) -> RunConfig:
    data = copy.deepcopy(data or {})
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
    kw = {}
    for k, v in data.items():
        if k in _NESTED and v is not None:
            cls = _NESTED[k]
            sub = {f.name for f in fields(cls)}
            bad = set(v) - sub
            if bad:
                raise ConfigError(f"unknown keys in {k}: {sorted(bad)}")
            v = cls(**v)
        kw[k] = v
    return RunConfig(**kw).validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))
