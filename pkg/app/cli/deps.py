import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.markup import escape

from app.core.errors import ConfigError, LipoError, SequenceError, SequenceMismatchError
from app.loop.pipeline import SourceFrame, feature_file_source, image_source
from app.schemas.config import PipelineConfig, load_config_file
from app.schemas.manifest import FeatureSource, RunManifest

logger = logging.getLogger(__name__)

console = Console()
err_console = Console(stderr=True)

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _usage_error(e: Exception) -> bool:
    if isinstance(e, SequenceError):
        e = e.cause
    return isinstance(e, (ConfigError, SequenceMismatchError))


@contextmanager
def cli_errors():
    """Map engine failures to exit codes: 2 for usage errors, 1 for everything else."""
    try:
        yield
    except typer.Exit:
        raise
    except (LipoError, OSError) as e:
        err_console.print(f"[bold red]Error:[/bold red] {escape(str(e))}", soft_wrap=True)
        raise typer.Exit(USAGE_EXIT if _usage_error(e) else RUNTIME_EXIT)


def load_manifest(dataset: Path, features: FeatureSource, config: Optional[Path],
                  out: Optional[Path], seed: Optional[int]) -> RunManifest:
    try:
        return RunManifest(dataset=dataset, features=features, config=config, out=out, seed=seed)
    except ValidationError as e:
        messages = "; ".join(err["msg"] for err in e.errors())
        raise ConfigError(f"Manifiesto inválido: {messages}") from e


def load_config(manifest: RunManifest, record_timings: bool = True) -> PipelineConfig:
    cfg = load_config_file(manifest.config, manifest.seed)
    if not record_timings:
        cfg = cfg.model_copy(update={"record_timings": False})
    return cfg


def frame_source(manifest: RunManifest, cfg: PipelineConfig) -> Iterator[SourceFrame]:
    paths = manifest.frame_paths()
    logger.info("%d frames en %s (%s)", len(paths), manifest.dataset, manifest.features.value)
    if manifest.features is FeatureSource.extract:
        return image_source(paths, cfg.extraction, cfg.use_points, cfg.use_lines)
    return feature_file_source(paths, cfg.extraction.descriptor_bits)


def output_dir(out: Optional[Path]) -> Optional[Path]:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return out
