from pathlib import Path
from typing import Annotated, Optional

import typer
from pydantic import ValidationError

from app.cli.deps import cli_errors, console
from app.core.config import DEFAULT_SEED
from app.core.errors import ConfigError
from app.eval.synthetic import SyntheticConfig, generate_sequence


def synth_command(
    out: Annotated[Path, typer.Option("--out", help="Directorio de salida")],
    frames: Annotated[int, typer.Option("--frames", help="Número de frames")] = 200,
    revisits: Annotated[int, typer.Option("--revisits", help="Frames que revisitan el inicio del recorrido")] = 20,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Semilla del generador")] = None,
    roll: Annotated[float, typer.Option("--roll", help="Giro de cámara en las revisitas, en grados")] = 0.0,
    aliasing: Annotated[float, typer.Option("--aliasing", help="Fracción de segmentos con un duplicado girado")] = 0.0,
):
    """Genera una secuencia sintética de features con su ground truth."""
    with cli_errors():
        try:
            cfg = SyntheticConfig(
                frames=frames, revisits=revisits, roll_deg=roll, aliasing=aliasing,
                seed=DEFAULT_SEED if seed is None else seed,
            )
        except ValidationError as e:
            raise ConfigError(f"Parámetros inválidos: {'; '.join(err['msg'] for err in e.errors())}") from e
        sequence = generate_sequence(cfg)
        paths = sequence.save(out)
        console.print(
            f"{len(paths)} ficheros de features y groundtruth.txt "
            f"({len(sequence.ground_truth.queries)} consultas con cierre) en {out}",
            markup=False, highlight=False,
        )
