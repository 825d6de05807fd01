"""Run configuration: a JSON document with a fixed key schema.

Every section is optional and falls back to the defaults below. Unknown
keys anywhere are rejected with the dotted path of the offending field::

    {
      "seed": 0,
      "plant": {"m_e": 0.1, "m_h": 0.04, "zeta_h": 0.13},
      "subject": {"k_base": 5.0, "k_grip": 60.0, ...},
      "shaper": {"lambda1": 2.0, "lambda2": 2.0, "alpha_ss": 4.0,
                 "omega_z2": 62.83, "zeta0": 0.2, "zeta1": 0.707},
      "forest": {"trees": 50, "depth": 10, "min_leaf": 5},
      "protocol": {"grips_lb": [0, 22, ...], "dataset_stride": 5,
                   "voluntary_rad": 0.05, "tau_noise": 0.02},
      "analyze": {"k_grid": [5, 10, 20, 40, 60, 90],
                  "lambda_grid": [[2, 2], [1.05, 1.05]],
                  "robust_range": [5, 90]},
      "scenario": {"preload_nm": 2.0, "dummy_k": 60.0, "relaxed_k": 10.0,
                   "tensed_k": 90.0, "clamp": 0.35}
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from ..plant import DEFAULT_M_E, DEFAULT_M_H, DEFAULT_ZETA_H
from ..protocol.experiments import GRIP_LB
from ..protocol.subject import SubjectParams
from ..shaper import OMEGA_Z2_DEFAULT, ShaperConfig

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the field."""


@dataclass(frozen=True)
class PlantSection:
    m_e: float = DEFAULT_M_E
    m_h: float = DEFAULT_M_H
    zeta_h: float = DEFAULT_ZETA_H


@dataclass(frozen=True)
class ShaperSection:
    lambda1: float = 2.0
    lambda2: float = 2.0
    alpha_ss: float = 4.0
    omega_z2: float = OMEGA_Z2_DEFAULT
    zeta0: float = 0.2
    zeta1: float = 0.707


@dataclass(frozen=True)
class ForestSection:
    trees: int = 50
    depth: int = 10
    min_leaf: int = 5


@dataclass(frozen=True)
class ProtocolSection:
    grips_lb: tuple = GRIP_LB
    dataset_stride: int = 5
    voluntary_rad: float = 0.05
    tau_noise: float = 0.02


@dataclass(frozen=True)
class AnalyzeSection:
    k_grid: tuple = (5.0, 10.0, 20.0, 40.0, 60.0, 90.0)
    lambda_grid: tuple = ((2.0, 2.0), (1.05, 1.05))
    robust_range: tuple = (5.0, 90.0)


@dataclass(frozen=True)
class ScenarioSection:
    preload_nm: float = 2.0
    dummy_k: float = 60.0
    relaxed_k: float = 10.0
    tensed_k: float = 90.0
    clamp: float = 0.35


_SUBJECT_KEYS = tuple(f.name for f in fields(SubjectParams) if f.name not in ("m_h", "zeta_h"))


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    plant: PlantSection = field(default_factory=PlantSection)
    subject: dict = field(default_factory=dict)
    shaper: ShaperSection = field(default_factory=ShaperSection)
    forest: ForestSection = field(default_factory=ForestSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    analyze: AnalyzeSection = field(default_factory=AnalyzeSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)

    def subject_params(self) -> SubjectParams:
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in self.subject.items()}
        return SubjectParams(m_h=self.plant.m_h, zeta_h=self.plant.zeta_h, **kw)

    def shaper_config(self) -> ShaperConfig:
        return ShaperConfig(m_he=self.plant.m_e + self.plant.m_h, **asdict(self.shaper))

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return RunConfig(seed, self.plant, self.subject, self.shaper, self.forest, self.protocol, self.analyze, self.scenario)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subject"] = self.subject_params().to_dict()
        for k in ("m_h", "zeta_h"):
            d["subject"].pop(k)
        return _plain(d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _number(path, v, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return int(v) if integer else float(v)


def _section(cls, raw: Any, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls)}
    for k in raw:
        if k not in known:
            raise ConfigError(f"{path}.{k}: unknown key")
    kw = {}
    defaults = cls()
    for k, v in raw.items():
        d = getattr(defaults, k)
        p = f"{path}.{k}"
        if isinstance(d, tuple):
            if not isinstance(v, list):
                raise ConfigError(f"{p}: expected a list")
            if d and isinstance(d[0], tuple):
                out = []
                for i, pair in enumerate(v):
                    if not isinstance(pair, list) or len(pair) != 2:
                        raise ConfigError(f"{p}[{i}]: expected a [lambda1, lambda2] pair")
                    out.append(tuple(_number(f"{p}[{i}]", x) for x in pair))
                kw[k] = tuple(out)
            else:
                kw[k] = tuple(_number(f"{p}[{i}]", x) for i, x in enumerate(v))
        else:
            kw[k] = _number(p, v, integer=isinstance(d, int))
    return cls(**kw)


_SECTIONS = {
    "plant": PlantSection,
    "shaper": ShaperSection,
    "forest": ForestSection,
    "protocol": ProtocolSection,
    "analyze": AnalyzeSection,
    "scenario": ScenarioSection,
}


def parse_config(raw: Any) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    kw: dict = {}
    for k, v in raw.items():
        if k == "seed":
            kw["seed"] = _number("seed", v, integer=True)
        elif k == "subject":
            if not isinstance(v, dict):
                raise ConfigError("subject: expected an object")
            for sk in v:
                if sk not in _SUBJECT_KEYS:
                    raise ConfigError(f"subject.{sk}: unknown key")
            kw["subject"] = dict(v)
        elif k in _SECTIONS:
            kw[k] = _section(_SECTIONS[k], v, k)
        else:
            raise ConfigError(f"{k}: unknown key")
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.subject_params()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"subject: {exc}") from None
    try:
        cfg.shaper_config()
    except ValueError as exc:
        raise ConfigError(f"shaper: {exc}") from None
    p = cfg.plant
    if not p.m_e > 0:
        raise ConfigError("plant.m_e: must be positive")
    if p.m_h < 0 or p.zeta_h < 0:
        raise ConfigError("plant: m_h and zeta_h must be nonnegative")
    f = cfg.forest
    if f.trees < 1 or f.depth < 0 or f.min_leaf < 1:
        raise ConfigError("forest: trees >= 1, depth >= 0, min_leaf >= 1 required")
    if cfg.protocol.dataset_stride < 1:
        raise ConfigError("protocol.dataset_stride: must be >= 1")
    if len(cfg.protocol.grips_lb) < 1:
        raise ConfigError("protocol.grips_lb: need at least one grip load")
    a = cfg.analyze
    if len(a.robust_range) != 2 or not 0 < a.robust_range[0] <= a.robust_range[1]:
        raise ConfigError("analyze.robust_range: need [k_min, k_max] with 0 < k_min <= k_max")
    if any(k <= 0 for k in a.k_grid):
        raise ConfigError("analyze.k_grid: stiffness values must be positive")


def load_config(path: str | None) -> RunConfig:
    """Defaults when ``path`` is None; otherwise parse and validate the file."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_config(raw)
