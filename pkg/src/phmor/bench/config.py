"""Experiment configuration read from JSON."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..phcore import InputSignal, SinusoidInput, TabulatedInput, ZeroInput

__all__ = ["ExperimentConfig", "Prop1Options", "Tolerances", "make_input", "BOUND_ALIASES"]

BOUND_ALIASES = {"standard": "standard", "alp": "alp", "hier": "hierarchical",
                 "hierarchical": "hierarchical"}
PROP1_SOURCES = ("pod_extension", "error_augmented", "random_complement")


@dataclass
class Tolerances:
    rigor_slack: float = 1e-6
    prop1_tol: float = 1e-8
    floor_factor: float = 1e-14
    oracle_limit: int = 512
    tol_struct: float = 1e-10
    tol_psd: float = 1e-10


@dataclass
class Prop1Options:
    """Settings for the equality certification.

    ``x0``: ``"zero"``, ``"span"`` (random combination of ``V``) or
    ``"random"``. ``scale_secondary`` rescales the ``V_+`` columns and
    ``mix_primal`` adds components along ``V``; both make ``[V V_+]``
    non-H-orthonormal.
    """

    sources: list = field(default_factory=lambda: list(PROP1_SOURCES))
    x0: str = "zero"
    scale_secondary: bool = False
    mix_primal: bool = False


def make_input(spec: dict, m: int = 1) -> InputSignal:
    """Build an input from ``{"type": "sinusoid" | "zero" | "tabulated", ...}``."""
    if not isinstance(spec, dict):
        raise ConfigError(f"input spec must be an object, got {spec!r}")
    kind = spec.get("type", "sinusoid")
    try:
        if kind == "sinusoid":
            return SinusoidInput(spec.get("amplitude", 1.0), float(spec["frequency"]),
                                 float(spec.get("phase", 0.0)), m)
        if kind == "zero":
            return ZeroInput(m)
        if kind == "tabulated":
            return TabulatedInput(spec["times"], spec["values"])
    except KeyError as exc:
        raise ConfigError(f"input spec missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid input spec: {exc}") from None
    raise ConfigError(f"unknown input type {kind!r}")


def _defaults():
    return {
        "model": {"type": "msd_chain", "n_masses": 100, "mass": 1.0, "stiffness": 1.0e4, "damping": 200.0},
        "train_input": {"type": "sinusoid", "amplitude": 1.0, "frequency": 0.8},
        "test_input": {"type": "sinusoid", "amplitude": 1.0, "frequency": 1.3},
        "grid": {"t0": 0.0, "T": 10.0, "n_steps": 1000},
    }


@dataclass
class ExperimentConfig:
    """Everything a run depends on.

    ``n_A`` may be ``"rank"``: the numerical rank of the error snapshots
    (relative cutoff ``1e-10``). ``alp_snapshots`` selects training or test
    errors for the ALP basis. ``fom_solver`` and ``scheme`` default to
    ``"auto"``: oracle with exponential reduced solves up to the oracle
    limit, implicit midpoint for both otherwise.
    """

    model: dict = field(default_factory=lambda: _defaults()["model"])
    train_input: dict = field(default_factory=lambda: _defaults()["train_input"])
    test_input: dict = field(default_factory=lambda: _defaults()["test_input"])
    grid: dict = field(default_factory=lambda: _defaults()["grid"])
    n: int = 10
    n_A: int | str = 20
    n_H: int = 20
    bounds: list = field(default_factory=lambda: ["standard", "alp", "hierarchical"])
    fom_solver: str = "auto"
    scheme: str = "auto"
    kernel: str = "unit"
    alp_snapshots: str = "train"
    out: str = "phmor_run"
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    prop1: Prop1Options = field(default_factory=Prop1Options)

    def __post_init__(self):
        if isinstance(self.tolerances, dict):
            self.tolerances = _build(Tolerances, self.tolerances, "tolerances")
        if isinstance(self.prop1, dict):
            self.prop1 = _build(Prop1Options, self.prop1, "prop1")
        self.validate()

    def validate(self):
        bad = [b for b in self.bounds if b not in BOUND_ALIASES]
        if bad:
            raise ConfigError(f"unknown bounds {bad}; choose from standard, alp, hier")
        self.bounds = list(dict.fromkeys(BOUND_ALIASES[b] for b in self.bounds))
        for key in ("n", "n_H"):
            v = getattr(self, key)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{key} must be a positive integer, got {v!r}")
        if not (self.n_A == "rank" or (isinstance(self.n_A, int) and self.n_A >= 1)):
            raise ConfigError(f"n_A must be a positive integer or 'rank', got {self.n_A!r}")
        if self.n_H <= self.n:
            raise ConfigError(f"n_H={self.n_H} must exceed n={self.n}")
        if self.fom_solver not in ("auto", "oracle", "midpoint"):
            raise ConfigError(f"fom_solver must be auto, oracle or midpoint, got {self.fom_solver!r}")
        if self.scheme not in ("auto", "exponential", "midpoint"):
            raise ConfigError(f"scheme must be auto, exponential or midpoint, got {self.scheme!r}")
        if self.kernel not in ("unit", "decay"):
            raise ConfigError(f"kernel must be unit or decay, got {self.kernel!r}")
        if self.alp_snapshots not in ("train", "test"):
            raise ConfigError("alp_snapshots must be 'train' or 'test'")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        g = self.grid
        try:
            if not (float(g["T"]) > float(g.get("t0", 0.0)) and int(g["n_steps"]) >= 1):
                raise ConfigError("grid needs T > t0 and n_steps >= 1")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid spec {g!r}: {exc}") from None
        if self.model.get("type") not in ("msd_chain", "file"):
            raise ConfigError(f"model type must be msd_chain or file, got {self.model.get('type')!r}")
        if self.model["type"] == "file" and "path" not in self.model:
            raise ConfigError("file model needs 'path'")
        unknown = [s for s in self.prop1.sources if s not in PROP1_SOURCES]
        if unknown:
            raise ConfigError(f"unknown prop1 sources {unknown}")
        if self.prop1.x0 not in ("zero", "span", "random"):
            raise ConfigError("prop1.x0 must be zero, span or random")
        for inp in (self.train_input, self.test_input):
            make_input(inp)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        return _build(cls, d, "config")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def merged(self, **overrides) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(d)


def _build(cls, d, where):
    names = set(cls.__dataclass_fields__)
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None
