from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, model_validator

from app.core.config import FEATURE_FILE_SUFFIX, IMAGE_SUFFIXES


class FeatureSource(str, Enum):
    extract = "extract"
    imported = "import"


def _files(directory: Path, suffixes: tuple[str, ...]) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in suffixes)


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset: Path
    features: FeatureSource = FeatureSource.extract
    config: Optional[Path] = None
    out: Optional[Path] = None
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _paths_exist(self):
        if not self.dataset.is_dir():
            raise ValueError(f"el dataset {self.dataset} no es un directorio")
        if self.config is not None and not self.config.is_file():
            raise ValueError(f"no existe el fichero de configuración {self.config}")
        images = _files(self.dataset, IMAGE_SUFFIXES)
        feature_files = _files(self.dataset, (FEATURE_FILE_SUFFIX,))
        if self.features is FeatureSource.extract and feature_files and not images:
            raise ValueError(f"{self.dataset} solo contiene ficheros de features; usa --features import")
        if self.features is FeatureSource.imported and images and not feature_files:
            raise ValueError(f"{self.dataset} solo contiene imágenes; usa --features extract")
        return self

    def frame_paths(self) -> list[Path]:
        """Inputs in lexicographic order; the position of each file is its frame id."""
        if self.features is FeatureSource.extract:
            return _files(self.dataset, IMAGE_SUFFIXES)
        return _files(self.dataset, (FEATURE_FILE_SUFFIX,))
