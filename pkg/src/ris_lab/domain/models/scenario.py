import hashlib
from pathlib import Path
from typing import Any

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ris_lab.core.errors import ConfigError
from ris_lab.domain.models.agent import DdpgConfig
from ris_lab.domain.models.baselines import AoConfig
from ris_lab.domain.models.environment import EnvConfig
from ris_lab.domain.models.geometry import ArrayConfig, MovementArea, PathLossConfig, Point3, ScenarioGeometry
from ris_lab.domain.models.ien import IenDatasetConfig, IenTrainingConfig


class GeometryConfig(BaseModel):
    """Device positions, the UE movement disc and the scatterer pools of both links."""

    model_config = ConfigDict(frozen=True)

    loc_bs: Point3 = (20.0, 0.0, 10.0)
    loc_ris: Point3 = (0.0, 30.0, 20.0)
    loc_ue: Point3 = (10.0, 50.0, 0.0)
    ue_area: MovementArea = Field(default_factory=MovementArea)
    scatterer_pool_bs_ris: list[Point3] = Field(default_factory=lambda: [(10.0, 12.0, 18.0), (12.0, 20.0, 5.0)])
    scatterer_pool_ris_ue: list[Point3] = Field(
        default_factory=lambda: [(5.0, 40.0, 10.0), (5.0, 45.0, 5.0), (8.0, 42.0, 3.0), (3.0, 48.0, 8.0)]
    )
    bs_ris_paths: int = Field(default=1, ge=1, description="L_G: LoS plus scatterer paths on the BS-RIS link")
    ris_ue_paths: int = Field(default=3, ge=1, description="L_D: LoS plus scatterer paths on the RIS-UE link")

    @model_validator(mode="after")
    def check_pools(self) -> "GeometryConfig":
        if self.bs_ris_paths - 1 > len(self.scatterer_pool_bs_ris):
            raise ValueError(f"bs_ris_paths={self.bs_ris_paths} needs {self.bs_ris_paths - 1} BS-RIS scatterers")
        if self.ris_ue_paths - 1 > len(self.scatterer_pool_ris_ue):
            raise ValueError(f"ris_ue_paths={self.ris_ue_paths} needs {self.ris_ue_paths - 1} RIS-UE scatterers")
        return self

    def scenario_geometry(self, loc_ue=None, ris_ue_paths: int | None = None) -> ScenarioGeometry:
        """Geometry with the first ``L - 1`` pool scatterers of each link."""
        paths = self.ris_ue_paths if ris_ue_paths is None else ris_ue_paths
        if paths - 1 > len(self.scatterer_pool_ris_ue):
            raise ConfigError(f"ris_ue_paths={paths} exceeds the RIS-UE scatterer pool")
        return ScenarioGeometry(
            loc_bs=self.loc_bs,
            loc_ris=self.loc_ris,
            loc_ue=self.loc_ue if loc_ue is None else tuple(float(c) for c in loc_ue),
            scatterers_bs_ris=self.scatterer_pool_bs_ris[: self.bs_ris_paths - 1],
            scatterers_ris_ue=self.scatterer_pool_ris_ue[: paths - 1],
        )


class IenConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset: IenDatasetConfig = Field(default_factory=IenDatasetConfig)
    training: IenTrainingConfig = Field(default_factory=IenTrainingConfig)


class SweepConfig(BaseModel):
    """Axis values of the figure sweeps."""

    model_config = ConfigDict(frozen=True)

    ris_elements: list[int] = Field(default_factory=lambda: [16, 36, 64])
    paths: list[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    etas: list[float] = Field(default_factory=lambda: [0.0, 0.05, 0.1])
    coherence_times: list[int] = Field(default_factory=lambda: [1000, 2000, 5000, 10000, 20000])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    eta_estimation_samples: int = Field(default=1000, ge=1)


class ScenarioConfig(BaseModel):
    """Everything one experiment run depends on."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    arrays: ArrayConfig = Field(default_factory=ArrayConfig)
    path_loss: PathLossConfig = Field(default_factory=PathLossConfig)
    env: EnvConfig = Field(default_factory=EnvConfig)
    ien: IenConfig = Field(default_factory=IenConfig)
    ddpg: DdpgConfig = Field(default_factory=DdpgConfig)
    ao: AoConfig = Field(default_factory=AoConfig)
    eta: float = Field(default=0.0, ge=0.0, description="Location error level seen by the IEN agent")
    coherence_time_tc: int = Field(default=10000, ge=1, description="T_c in slots")
    interaction_slots_t: int = Field(default=5000, ge=0, description="Slots the true-channel agent spends interacting")
    random_trials: int = Field(default=1000, ge=1)
    seed: int = 0
    sweep: SweepConfig = Field(default_factory=SweepConfig)


def _assign(doc: dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override {dotted!r}: {key!r} is not a section")
        node = child
    node[keys[-1]] = value


def apply_overrides(doc: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``dotted.path=value`` overrides; values are parsed as JSON, falling back to strings."""
    for item in overrides:
        path, sep, raw = item.partition("=")
        if not sep or not path.strip():
            raise ConfigError(f"override {item!r} must look like dotted.path=value")
        try:
            value = orjson.loads(raw)
        except orjson.JSONDecodeError:
            value = raw
        _assign(doc, path.strip(), value)
    return doc


def _format_validation_error(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())


def parse_scenario(doc: dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(f"invalid scenario config: {_format_validation_error(e)}") from None


def load_scenario(path: Path, overrides: list[str] | None = None) -> ScenarioConfig:
    """Read a scenario JSON, apply overrides and validate."""
    try:
        doc = orjson.loads(Path(path).read_bytes())
    except FileNotFoundError:
        raise ConfigError(f"scenario config not found: {path}") from None
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"scenario config {path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"scenario config {path} must hold a JSON object")
    return parse_scenario(apply_overrides(doc, overrides or []))


def dump_scenario(cfg: ScenarioConfig) -> bytes:
    return orjson.dumps(cfg.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2)


def config_hash(cfg: ScenarioConfig) -> str:
    """SHA-256 of the canonical (sorted-key, compact) JSON form."""
    return hashlib.sha256(orjson.dumps(cfg.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS)).hexdigest()
