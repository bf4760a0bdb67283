"""Pipeline configuration: a YAML tree with validation and lossless round-trip."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .operators import OPERATORS, check_dim

CORE_STRATEGIES = ("degree", "hybrid")


@dataclass
class CoreSection:
    strategy: str = "degree"
    eta_n: float = 0.05
    eta_e: float = 0.005


@dataclass
class BlocsSection:
    h: float = 0.6
    m: int = 2000


@dataclass
class TrainSection:
    operator: str = "distmult"
    d: int = 100
    n_epoch: int = 25
    b: int = 512
    p: int = 100
    lr: float = 1e-3
    seed: int = 0


@dataclass
class PropagateSection:
    T: int | None = None  # None: ceil(2.5 * sampled MSPL)
    alpha: float = 1.0


@dataclass
class EvalSection:
    enabled: bool = False
    ratios: list = field(default_factory=lambda: [0.9, 0.05, 0.05])
    n_negatives: int = 10_000


@dataclass
class PipelineConfig:
    input: str | None = None
    output_dir: str = "out"
    sep: str = "\t"
    core: CoreSection = field(default_factory=CoreSection)
    blocs: BlocsSection = field(default_factory=BlocsSection)
    train: TrainSection = field(default_factory=TrainSection)
    propagate: PropagateSection = field(default_factory=PropagateSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self) -> PipelineConfig:
        c, bl, tr, pr, ev = self.core, self.blocs, self.train, self.propagate, self.eval
        if c.strategy not in CORE_STRATEGIES:
            raise ConfigError("core.strategy", f"expected one of {CORE_STRATEGIES}")
        _fraction("core.eta_n", c.eta_n)
        if c.strategy == "hybrid":
            _fraction("core.eta_e", c.eta_e)
        if not _is_number(bl.h) or not 0 < bl.h < 1:
            raise ConfigError("blocs.h", "must lie strictly between 0 and 1")
        _integer("blocs.m", bl.m, 2)
        if tr.operator not in OPERATORS:
            raise ConfigError("train.operator", f"expected one of {OPERATORS}")
        try:
            check_dim(tr.operator, tr.d)
        except ConfigError as exc:
            raise ConfigError("train.d", exc.message) from None
        _integer("train.n_epoch", tr.n_epoch, 0)
        _integer("train.b", tr.b, 1)
        _integer("train.p", tr.p, 1)
        _integer("train.seed", tr.seed, 0)
        if not _is_number(tr.lr) or not tr.lr > 0:
            raise ConfigError("train.lr", "must be a positive number")
        if pr.T is not None:
            _integer("propagate.T", pr.T, 1)
        if not _is_number(pr.alpha) or not pr.alpha > 0:
            raise ConfigError("propagate.alpha", "must be a positive number")
        if not isinstance(ev.enabled, bool):
            raise ConfigError("eval.enabled", "must be true or false")
        if len(ev.ratios) != 3 or not all(_is_number(r) and r >= 0 for r in ev.ratios):
            raise ConfigError("eval.ratios", "must be three non-negative numbers")
        if abs(sum(ev.ratios) - 1.0) > 1e-9:
            raise ConfigError("eval.ratios", "must sum to 1")
        _integer("eval.n_negatives", ev.n_negatives, 1)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> PipelineConfig:
        data = copy.deepcopy(data or {})
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a mapping")
        sections = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in sections:
                raise ConfigError(key, "unknown field")
            factory = sections[key].default_factory
            if factory is not dataclasses.MISSING:
                kwargs[key] = _section(factory, key, value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> PipelineConfig:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML: {exc}") from None
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> PipelineConfig:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _section(factory, name: str, value):
    if value is None:
        return factory()
    if not isinstance(value, dict):
        raise ConfigError(name, "must be a mapping")
    known = {f.name for f in dataclasses.fields(factory)}
    for key in value:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown field")
    return factory(**value)


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _fraction(name: str, x):
    if not _is_number(x) or not 0 < x <= 1:
        raise ConfigError(name, "must be a fraction in (0, 1]")


def _integer(name: str, x, minimum: int):
    if not isinstance(x, int) or isinstance(x, bool) or x < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}")
