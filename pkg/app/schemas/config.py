import math
from enum import Enum
from itertools import combinations
from pathlib import Path

from dotenv.parser import parse_stream
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.config import DEFAULT_SEED, DESCRIPTOR_BITS
from app.core.errors import ConfigError

LBD_PAIR_COUNT = 32


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExtractionConfig(_Section):
    max_points: int = Field(1000, ge=0)
    max_lines: int = Field(300, ge=0)
    min_line_length: float = Field(25.0, gt=0)
    fast_threshold: int = Field(20, ge=1, le=255)
    band_count: int = Field(9, ge=1)
    band_width: int = Field(7, ge=1)
    patch_size: int = Field(31, ge=7)
    pyramid_levels: int = Field(3, ge=1, le=3)
    scale_factor: float = Field(1.2, gt=1.0)
    angle_tolerance_deg: float = Field(22.5, gt=0, lt=90)
    min_line_density: float = Field(0.7, gt=0, le=1)
    descriptor_bits: int = Field(DESCRIPTOR_BITS, gt=0, multiple_of=8)

    @field_validator("band_count")
    @classmethod
    def _odd_band_count(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("band_count debe ser impar")
        if len(list(combinations(range(v), 2))) < LBD_PAIR_COUNT:
            raise ValueError(f"band_count debe permitir {LBD_PAIR_COUNT} parejas de bandas")
        return v

    @field_validator("patch_size")
    @classmethod
    def _odd_patch(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("patch_size debe ser impar")
        return v


class VocabConfig(_Section):
    branching: int = Field(16, ge=2)
    leaf_capacity: int = Field(150, ge=2)
    merge_threshold: int = Field(16, ge=0)
    max_query_distance: int = Field(64, ge=0)
    max_results: int = Field(50, ge=1)
    prune_threshold: float = Field(0.3, ge=0, le=1)
    backtracking: int = Field(4, ge=0)
    exact: bool = False
    kmajority_iterations: int = Field(10, ge=1)
    descriptor_bits: int = Field(DESCRIPTOR_BITS, gt=0, multiple_of=8)
    seed: int = DEFAULT_SEED


class FusionConfig(_Section):
    penalty_factor: float = Field(0.5, ge=0)


class IslandConfig(_Section):
    gap: int = Field(3, ge=0)


class GeometryConfig(_Section):
    nndr_ratio: float = Field(0.8, gt=0, le=1)
    fallback_distance: int = Field(64, ge=0)
    alpha_max_deg: float = Field(10.0, gt=0, le=180)
    rotation_bin_deg: float = Field(10.0, gt=0, le=180)
    rotation_salience: float = Field(0.1, ge=0, le=1)
    rotation_prefilter: int = Field(64, ge=0)
    use_rotation_filter: bool = True
    ransac_iterations: int = Field(2000, ge=1)
    ransac_confidence: float = Field(0.99, gt=0, lt=1)
    epi_tol: float = Field(3.0, gt=0)
    min_inliers: float = Field(12, ge=0)
    seed: int = DEFAULT_SEED

    @property
    def alpha_max(self) -> float:
        return math.radians(self.alpha_max_deg)

    @property
    def rotation_bin(self) -> float:
        return math.radians(self.rotation_bin_deg)


class FeatureMode(str, Enum):
    points = "points"
    lines = "lines"
    both = "both"


class PipelineConfig(_Section):
    gating_window: int = Field(60, ge=0)
    seed: int = DEFAULT_SEED
    feature_mode: FeatureMode = FeatureMode.both
    record_timings: bool = True
    extraction: ExtractionConfig = ExtractionConfig()
    vocab: VocabConfig = VocabConfig()
    fusion: FusionConfig = FusionConfig()
    islands: IslandConfig = IslandConfig()
    geometry: GeometryConfig = GeometryConfig()

    @model_validator(mode="after")
    def _consistent_widths(self):
        if self.extraction.descriptor_bits != self.vocab.descriptor_bits:
            raise ValueError("extraction.descriptor_bits y vocab.descriptor_bits deben coincidir")
        return self

    @property
    def use_points(self) -> bool:
        return self.feature_mode in (FeatureMode.points, FeatureMode.both)

    @property
    def use_lines(self) -> bool:
        return self.feature_mode in (FeatureMode.lines, FeatureMode.both)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return self.model_copy(update={
            "seed": seed,
            "vocab": self.vocab.model_copy(update={"seed": seed}),
            "geometry": self.geometry.model_copy(update={"seed": seed}),
        })

    def with_min_inliers(self, min_inliers: float) -> "PipelineConfig":
        return self.model_copy(update={
            "geometry": self.geometry.model_copy(update={"min_inliers": min_inliers}),
        })


def _fold(flat: dict[str, str]) -> dict:
    nested: dict = {}
    for key, value in flat.items():
        parts = key.strip().split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ValueError(f"la clave '{key}' choca con '{part}'")
            node = child
        node[parts[-1]] = value.strip()
    return nested


def _read_bindings(path: Path) -> dict[str, str]:
    """``key = value`` pairs in file order; any line python-dotenv cannot parse is an error."""
    flat: dict[str, str] = {}
    with path.open(encoding="utf-8") as stream:
        for binding in parse_stream(stream):
            line = binding.original.line
            if binding.error:
                raise ConfigError(f"{path}:{line}: no se puede interpretar "
                                  f"'{binding.original.string.strip()}'")
            if binding.key is None:
                continue
            if binding.value is None:
                raise ConfigError(f"{path}:{line}: falta '=' tras la clave '{binding.key}'")
            flat[binding.key] = binding.value
    return flat


def load_config_file(path, seed: int | None = None) -> PipelineConfig:
    """Read a flat ``key = value`` file into a validated PipelineConfig.

    Section fields use dotted keys (``geometry.epi_tol = 2.5``); unknown keys
    and bad values raise ConfigError.
    """
    if path is None:
        config = PipelineConfig()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"No existe el fichero de configuración {path}")
        try:
            config = PipelineConfig.model_validate(_fold(_read_bindings(path)))
        except (ValidationError, ValueError) as e:
            raise ConfigError(f"Configuración inválida en {path}: {e}") from e
    if seed is not None:
        config = config.with_seed(seed)
    return config
