import logging
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.markup import escape

from app.cli.deps import cli_errors, console, err_console, output_dir
from app.core.config import FEATURE_FILE_SUFFIX
from app.core.errors import ConfigError, LipoError
from app.features.images import FeatureExtractor, list_images, read_image
from app.features.storage import save_features
from app.schemas.config import load_config_file

logger = logging.getLogger(__name__)


def feature_file_name(index: int, image: Path) -> str:
    return f"{index:06d}_{image.stem}{FEATURE_FILE_SUFFIX}"


def extract_command(
    images: Annotated[Path, typer.Argument(help="Directorio de imágenes (orden lexicográfico = orden de frames)")],
    out: Annotated[Path, typer.Option("--out", help="Directorio de salida de los ficheros de features")],
    config: Annotated[Optional[Path], typer.Option("--config", help="Fichero de configuración key = value")] = None,
    continue_on_error: Annotated[bool, typer.Option("--continue-on-error", help="Salta las imágenes ilegibles en lugar de abortar")] = False,
):
    """Extrae puntos y segmentos de cada imagen y los guarda en ficheros de features."""
    with cli_errors():
        if not images.is_dir():
            raise ConfigError(f"{images} no es un directorio")
        cfg = load_config_file(config)
        output_dir(out)
        extractor = FeatureExtractor(cfg.extraction, cfg.use_points, cfg.use_lines)
        written, failed = 0, []
        for index, image in enumerate(list_images(images)):
            try:
                features = extractor.extract(read_image(image), index)
            except LipoError as e:
                if not continue_on_error:
                    raise
                failed.append(image)
                logger.warning("Imagen saltada: %s", image)
                err_console.print(f"[yellow]Saltada:[/yellow] {escape(str(e))}", soft_wrap=True)
                continue
            save_features(features, out / feature_file_name(index, image))
            written += 1
        logger.info("%d ficheros de features escritos en %s", written, out)
        console.print(f"{written} ficheros escritos, {len(failed)} imágenes con error")
