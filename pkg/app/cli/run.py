import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from app.cli.deps import cli_errors, console, frame_source, load_config, load_manifest, output_dir
from app.loop.pipeline import LoopClosureDetector, run_sequence
from app.schemas.decision import LoopDecision, write_decision_log
from app.schemas.manifest import FeatureSource

logger = logging.getLogger(__name__)

DECISION_LOG = "decisions.log"
SUMMARY = "summary.txt"


def run_command(
    dataset: Annotated[Path, typer.Argument(help="Directorio con imágenes o ficheros de features")],
    out: Annotated[Path, typer.Option("--out", help="Directorio de salida (log de decisiones y resumen)")],
    config: Annotated[Optional[Path], typer.Option("--config", help="Fichero de configuración key = value")] = None,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Semilla de RANSAC y del vocabulario")] = None,
    features: Annotated[FeatureSource, typer.Option("--features", help="extract: extrae de imágenes; import: lee ficheros de features")] = FeatureSource.extract,
    no_timings: Annotated[bool, typer.Option("--no-timings", help="Escribe tiempos a 0 para obtener logs reproducibles")] = False,
    save_vocab: Annotated[Optional[Path], typer.Option("--save-vocab", help="Guarda los vocabularios al terminar")] = None,
):
    """Ejecuta la detección de cierres de bucle sobre una secuencia."""
    with cli_errors():
        manifest = load_manifest(dataset, features, config, out, seed)
        cfg = load_config(manifest, record_timings=not no_timings)
        output_dir(out)
        detector = LoopClosureDetector(cfg)
        decisions: list[LoopDecision] = []
        summary = run_sequence(frame_source(manifest, cfg), cfg, decisions.append, detector)
        write_decision_log(decisions, out / DECISION_LOG)
        (out / SUMMARY).write_text(summary.render(), encoding="utf-8")
        if save_vocab is not None:
            output_dir(save_vocab)
            if detector.point_vocab is not None:
                detector.point_vocab.save(save_vocab / "points.voc")
            if detector.line_vocab is not None:
                detector.line_vocab.save(save_vocab / "lines.voc")
            logger.info("Vocabularios guardados en %s", save_vocab)
        console.print(summary.render(), markup=False, highlight=False)
