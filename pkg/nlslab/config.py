import json
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, model_validator

from nlslab.errors import ConfigParse, IOFailure
from nlslab.evolution import EvolutionConfig
from nlslab.field import RadialGrid
from nlslab.nonlinearity import NonlinearitySpec
from nlslab.variational import ShootingConfig

PRESETS_DIR = Path(__file__).parent / "presets"


class GridConfig(BaseModel):
    kind: Literal["graded", "uniform"] = "graded"
    n: int = 8192
    r_max: float = 200.0
    r_core: float = 5.0
    core_fraction: float = 0.5

    def build(self, d: int) -> RadialGrid:
        if self.kind == "uniform":
            return RadialGrid.uniform(d, self.n, self.r_max)
        return RadialGrid.graded(d, self.n, self.r_max, self.r_core, self.core_fraction)


class EvolutionSettings(EvolutionConfig):
    dt: float = 1e-3
    t_end: float = 2.0
    sample_every: int = 20


class ScanSettings(BaseModel):
    lambda_min_factor: float = 0.05
    lambda_max_factor: float = 20.0
    n_points: int = 200


class TrialSettings(BaseModel):
    count: int = 100
    rescale_mus: List[float] = Field(default_factory=lambda: [0.5, 0.8, 0.9, 1.0, 1.1, 1.25, 2.0])
    bubble_eps: List[float] = Field(default_factory=lambda: [0.5, 0.2, 0.1, 0.05])


class RunConfig(BaseModel):
    """Everything a subcommand needs; flags override these keys"""

    dimension: int = 5
    terms: List[Tuple[float, float]] = Field(default_factory=lambda: [(1.0, 2.0)])
    diagnostic: bool = False
    omega: float = 1.0
    omegas: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    grid: GridConfig = Field(default_factory=GridConfig)
    evolution_grid: GridConfig = Field(
        default_factory=lambda: GridConfig(kind="uniform", n=8192, r_max=60.0)
    )
    shooting: ShootingConfig = Field(default_factory=ShootingConfig)
    evolution: EvolutionSettings = Field(default_factory=EvolutionSettings)
    scan: ScanSettings = Field(default_factory=ScanSettings)
    trials: TrialSettings = Field(default_factory=TrialSettings)
    out_dir: Optional[str] = None
    seed: int = 0

    @model_validator(mode="after")
    def _positive_settings(self) -> "RunConfig":
        tolerances = {
            "shooting.rtol": self.shooting.rtol,
            "shooting.atol": self.shooting.atol,
            "shooting.decay_tol": self.shooting.decay_tol,
            "evolution.fixed_point_tol": self.evolution.fixed_point_tol,
            "evolution.stall_tol": self.evolution.stall_tol,
            "evolution.drift_tol": self.evolution.drift_tol,
            "evolution.dt": self.evolution.dt,
            "omega": self.omega,
        }
        for key, value in tolerances.items():
            if not value > 0:
                raise ValueError(f"{key} must be positive, got {value}")
        if self.evolution.sample_every < 1:
            raise ValueError("evolution.sample_every must be at least 1")
        return self

    def spec(self) -> NonlinearitySpec:
        """The validated perturbation described by dimension/terms/diagnostic"""
        return NonlinearitySpec.from_terms(self.dimension, list(self.terms), self.diagnostic)

    def resolve_out_dir(self) -> Path:
        load_dotenv()
        return Path(self.out_dir or os.getenv("NLSLAB_OUT_DIR", "runs"))

    def save(self, filepath: str) -> None:
        try:
            with open(filepath, "w") as f:
                json.dump(self.model_dump(), f, indent=2)
        except OSError as e:
            raise IOFailure(f"Could not write config to {filepath}: {e}") from e

    @classmethod
    def load(cls, filepath: str) -> "RunConfig":
        try:
            with open(filepath) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigParse(f"Config {filepath} is not valid JSON: {e}") from e
        except OSError as e:
            raise IOFailure(f"Could not read config {filepath}: {e}") from e
        return cls.parse(data, source=filepath)

    @classmethod
    def parse(cls, data: dict, source: str = "<config>") -> "RunConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigParse(f"Invalid config {source}: {e}") from e

    @classmethod
    def from_preset(cls, name: str) -> "RunConfig":
        path = PRESETS_DIR / f"{name}.json"
        if not path.exists():
            raise ConfigParse(f"Unknown preset '{name}'; available: {', '.join(available_presets())}")
        return cls.load(str(path))

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with dotted keys (e.g. ``evolution.dt``) replaced; None values are skipped"""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            target = data
            *parents, leaf = key.split(".")
            for parent in parents:
                target = target[parent]
            target[leaf] = value
        return self.parse(data, source="overrides")


def available_presets() -> List[str]:
    return sorted(path.stem for path in PRESETS_DIR.glob("*.json"))
