"""Strict experiment configuration schema.

Configs are JSON documents validated by pydantic models that forbid unknown
keys.  ``parse_config`` and ``dump_config`` round-trip: dumping a parsed
config and parsing it again gives an equal object.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import scalar_laws as sl
from .counting import CountingProcess, counting_from_config
from .errors import ConfigError
from .mc_core import EngineConfig, SplittingConfig
from .rare_sets import RareSet, rare_set_from_config
from .vector_laws import VectorLaw, vector_law_from_config

__all__ = [
    "EXPERIMENT_KINDS",
    "ExperimentFile",
    "parse_config",
    "load_config",
    "dump_config",
    "config_hash",
    "format_validation_error",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


Family = Literal["pareto", "weibull", "lognormal", "exponential", "geometric", "degenerate"]


class LawSpec(_Strict):
    family: Family
    params: dict[str, float] = Field(default_factory=dict)

    def build(self) -> sl.ScalarLaw:
        return sl.law_from_config(self.model_dump())


class IndependentSpec(_Strict):
    kind: Literal["independent"]
    marginals: list[LawSpec] = Field(min_length=1)


class LwqdSpec(_Strict):
    kind: Literal["lwqd"]
    common: LawSpec
    dim: int = 2
    shock_weight: float = 0.5
    shock: LawSpec | None = None


class MrvSpec(_Strict):
    kind: Literal["mrv"]
    alpha: float
    axis_weights: list[float] = Field(default_factory=lambda: [0.5, 0.5])
    diag_weight: float = 0.0
    scale: float = 1.0


VectorLawSpec = Annotated[Union[IndependentSpec, LwqdSpec, MrvSpec], Field(discriminator="kind")]


class HalfspaceSpec(_Strict):
    kind: Literal["halfspace"]
    weights: list[float]
    c: float


class OrthantSpec(_Strict):
    kind: Literal["orthant"]
    thresholds: list[float]


class RuinTranslateSpec(_Strict):
    kind: Literal["ruin_translate"]
    allocation: list[float]
    ruin_kind: Literal["sum_negative", "any_negative"]


class DirectionsSpec(_Strict):
    kind: Literal["directions"]
    directions: list[list[float]]


SetSpec = Annotated[Union[HalfspaceSpec, OrthantSpec, RuinTranslateSpec, DirectionsSpec],
                    Field(discriminator="kind")]


class PoissonSpec(_Strict):
    kind: Literal["poisson"]
    rate: float = 1.0


class RenewalSpec(_Strict):
    kind: Literal["renewal", "cyclic"]
    laws: list[LawSpec] = Field(min_length=1)
    offset: int = 0


class StormSpec(_Strict):
    kind: Literal["storm"]
    first: float
    ratio: float
    offset: int = 0


ArrivalSpec = Annotated[Union[PoissonSpec, RenewalSpec, StormSpec], Field(discriminator="kind")]


class SplittingSpec(_Strict):
    n_per_level: int = 4000
    replicas: int = 10
    n_moves: int = 2
    p0: float = 0.2
    max_levels: int = 12
    pilot_n: int = 2000
    rho: float = 0.8


class EngineSpec(_Strict):
    seed: int = 20240601
    workers: int | None = None
    budget: int = Field(default=200_000, ge=1)
    chunk_size: int = Field(default=65536, ge=1)
    splitting: SplittingSpec = Field(default_factory=SplittingSpec)

    def build(self, budget_scale: float = 1.0) -> EngineConfig:
        return EngineConfig(seed=self.seed, workers=self.workers,
                            budget=max(1, int(round(self.budget * budget_scale))),
                            chunk_size=self.chunk_size,
                            splitting=SplittingConfig(**self.splitting.model_dump()))


class PremiumSpec(_Strict):
    cap: float = Field(ge=0)


class RiskModelSpec(_Strict):
    d: int = Field(ge=1)
    allocation: list[float]
    premiums: list[PremiumSpec]
    interest: float = Field(default=0.0, ge=0)
    claims: VectorLawSpec
    arrivals: ArrivalSpec
    horizon: float = Field(gt=0)

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.allocation) != self.d or len(self.premiums) != self.d:
            raise ValueError("allocation and premiums need d entries")
        return self


class _Base(_Strict):
    name: str = ""


class ClassDiagExp(_Base):
    experiment: Literal["class_diag"]
    law: LawSpec
    classes: list[Literal["L", "D", "R", "S", "S*", "S_*"]] = Field(min_length=1)
    x0: float = 8.0
    k_max: int = 17


class MaxsumExp(_Base):
    experiment: Literal["maxsum"]
    law1: VectorLawSpec
    law2: VectorLawSpec
    set: SetSpec
    x_grid: list[float] = Field(min_length=1)
    tol: float = 0.2


class NfoldExp(_Base):
    experiment: Literal["nfold"]
    law: VectorLawSpec
    set: SetSpec
    n: int = Field(ge=1)
    x_grid: list[float] = Field(min_length=1)
    tol: float = 0.2


class KestenExp(_Base):
    experiment: Literal["kesten"]
    law: VectorLawSpec
    set: SetSpec
    c: float
    n_max: int = Field(ge=1)
    n_list: list[int] | None = None
    x_grid: list[float] = Field(min_length=1)
    x_relative: bool = False
    growth_tol: float = 0.1


class StoppedSumExp(_Base):
    experiment: Literal["stopped_sum"]
    law: VectorLawSpec
    set: SetSpec
    tau: LawSpec
    x_grid: list[float] = Field(min_length=1)
    c: float | None = None
    tol: float = 0.2


class PldFixedExp(_Base):
    experiment: Literal["pld_fixed"]
    law: VectorLawSpec
    set: SetSpec
    n_list: list[int] = Field(min_length=1)
    x_mults: list[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    gamma: float | None = None
    tol: float = 0.15


class PldRandomExp(_Base):
    experiment: Literal["pld_random"]
    law: VectorLawSpec
    set: SetSpec
    arrivals: ArrivalSpec
    t_list: list[float] = Field(min_length=1)
    x_mults: list[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    gamma: float | None = None
    check_preconditions: bool = True
    delta: float = 0.5
    eps: float = 0.05
    tol: float = 0.2


class _RiskExp(_Base):
    model: RiskModelSpec
    t_list: list[float] = Field(min_length=1)
    x_list: list[float] | None = None
    target: float | None = Field(default=None, gt=0, lt=1)
    tol: float = 0.25

    @model_validator(mode="after")
    def _x_or_target(self):
        if (self.x_list is None) == (self.target is None):
            raise ValueError("give exactly one of x_list or target")
        return self


class EntranceExp(_RiskExp):
    experiment: Literal["entrance"]
    set: SetSpec


class RuinExp(_RiskExp):
    experiment: Literal["ruin"]
    ruin_kind: Literal["sum_negative", "any_negative"]


class DelayedSummabilityExp(_Base):
    experiment: Literal["assumption62"]
    model: RiskModelSpec
    set: SetSpec
    c: float | None = None
    T_star: float | None = None
    n_cap: int = Field(default=200, ge=10)
    budget: int = Field(default=100_000, ge=1000)


class WeightedUniformityExp(_Base):
    experiment: Literal["weighted_uniformity"]
    law: VectorLawSpec
    set: SetSpec
    n: int = Field(ge=1)
    a: float = Field(gt=0)
    b: float = Field(gt=0)
    c_samples: int = Field(default=2, ge=0)
    x_grid: list[float] = Field(min_length=1)
    tol: float = 0.2


class ProjectionExp(_Base):
    experiment: Literal["projection"]
    sets: list[SetSpec] = Field(min_length=1)
    n_pairs: int = Field(default=100_000, ge=1)
    delta: float = 1e-4


class EngineIntegrityExp(_Base):
    experiment: Literal["engine_integrity"]
    n_events: int = Field(default=20, ge=1)
    budget: int = Field(default=100_000, ge=100)


Experiment = Annotated[
    Union[ClassDiagExp, MaxsumExp, NfoldExp, KestenExp, StoppedSumExp, PldFixedExp, PldRandomExp,
          EntranceExp, RuinExp, DelayedSummabilityExp, WeightedUniformityExp, ProjectionExp,
          EngineIntegrityExp],
    Field(discriminator="experiment"),
]

EXPERIMENT_KINDS = ("class_diag", "maxsum", "nfold", "kesten", "stopped_sum", "pld_fixed", "pld_random",
                    "entrance", "ruin", "assumption62", "weighted_uniformity", "projection",
                    "engine_integrity")


class ExperimentFile(_Strict):
    description: str = ""
    engine: EngineSpec = Field(default_factory=EngineSpec)
    experiments: list[Experiment] = Field(min_length=1)
    time_limit_s: float | None = None


def build_vector_law(spec) -> VectorLaw:
    return vector_law_from_config(spec.model_dump(exclude_none=True))


def build_set(spec) -> RareSet:
    return rare_set_from_config(spec.model_dump())


def build_arrivals(spec) -> CountingProcess:
    return counting_from_config(spec.model_dump())


def parse_config(data: dict[str, Any] | str) -> ExperimentFile:
    """Validate a config given as a dict or JSON text; raises ``ConfigError``."""
    try:
        if isinstance(data, str):
            return ExperimentFile.model_validate_json(data)
        # dicts go through JSON so strict mode sees the same types as files
        return ExperimentFile.model_validate_json(json.dumps(data))
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc


def load_config(path: str | Path) -> ExperimentFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentFile) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True)


def config_hash(cfg: ExperimentFile) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)
