import logging
import math
from pathlib import Path
from typing import Annotated, Optional

import typer

from app.cli.deps import cli_errors, console, frame_source, load_config, load_manifest, output_dir
from app.core.errors import ConfigError
from app.eval.ground_truth import load_ground_truth
from app.eval.metrics import DEFAULT_THRESHOLDS, evaluation_report, line_inlier_ab, pr_sweep
from app.schemas.decision import read_decision_log
from app.schemas.manifest import FeatureSource

logger = logging.getLogger(__name__)

PR_CSV = "pr.csv"


def parse_thresholds(text: Optional[str]) -> tuple[float, ...]:
    if not text:
        return DEFAULT_THRESHOLDS
    try:
        values = tuple(math.inf if v.strip() in ("inf", "∞") else float(v) for v in text.split(","))
    except ValueError as e:
        raise ConfigError(f"Lista de umbrales inválida: {text}") from e
    if any(v < 0 for v in values):
        raise ConfigError("Los umbrales no pueden ser negativos")
    return values


def eval_command(
    log: Annotated[Path, typer.Argument(help="Log de decisiones generado por run")],
    gt: Annotated[Path, typer.Argument(help="Fichero de ground truth (líneas G q m, TOL n opcional)")],
    out: Annotated[Optional[Path], typer.Option("--out", help="Guarda el resumen en este directorio")] = None,
):
    """Calcula precisión, recall y el recall máximo con precisión 100%."""
    with cli_errors():
        report = evaluation_report(read_decision_log(log), load_ground_truth(gt))
        if output_dir(out) is not None:
            (out / "eval.txt").write_text(report, encoding="utf-8")
        console.print(report, markup=False, highlight=False, end="")


def sweep_command(
    dataset: Annotated[Path, typer.Argument(help="Directorio con imágenes o ficheros de features")],
    gt: Annotated[Path, typer.Argument(help="Fichero de ground truth")],
    out: Annotated[Path, typer.Option("--out", help="Directorio donde escribir pr.csv")],
    config: Annotated[Optional[Path], typer.Option("--config", help="Fichero de configuración key = value")] = None,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Semilla de RANSAC y del vocabulario")] = None,
    features: Annotated[FeatureSource, typer.Option("--features", help="extract | import")] = FeatureSource.extract,
    thresholds: Annotated[Optional[str], typer.Option("--thresholds", help="Valores de min_inliers separados por comas")] = None,
):
    """Barrido de min_inliers: curva precisión-recall en CSV."""
    with cli_errors():
        manifest = load_manifest(dataset, features, config, out, seed)
        cfg = load_config(manifest, record_timings=False)
        ground_truth = load_ground_truth(gt)
        output_dir(out)
        result = pr_sweep(frame_source(manifest, cfg), cfg, ground_truth, parse_thresholds(thresholds))
        (out / PR_CSV).write_text(result.to_csv(), encoding="utf-8")
        console.print(result.render(), markup=False, highlight=False, end="")


def ab_lines_command(
    dataset: Annotated[Path, typer.Argument(help="Directorio con imágenes o ficheros de features")],
    config: Annotated[Optional[Path], typer.Option("--config", help="Fichero de configuración key = value")] = None,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Semilla de RANSAC y del vocabulario")] = None,
    features: Annotated[FeatureSource, typer.Option("--features", help="extract | import")] = FeatureSource.extract,
    out: Annotated[Optional[Path], typer.Option("--out", help="Guarda la tabla en este directorio")] = None,
):
    """Compara los inliers de líneas con NNDR simple y con el filtro de orientación."""
    with cli_errors():
        manifest = load_manifest(dataset, features, config, out, seed)
        cfg = load_config(manifest, record_timings=False)
        frames = [frame.features for frame in frame_source(manifest, cfg)]
        table = line_inlier_ab(frames, cfg).render()
        if output_dir(out) is not None:
            (out / "ab_lines.txt").write_text(table, encoding="utf-8")
        console.print(table, markup=False, highlight=False, end="")
