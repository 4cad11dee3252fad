import typer

from app.cli import evaluate, extract, run, synth

app = typer.Typer(
    name="lineloop",
    help="Detección de cierres de bucle con puntos y segmentos sobre vocabularios incrementales.",
    no_args_is_help=True,
    add_completion=False,
)
app.command("extract")(extract.extract_command)
app.command("run")(run.run_command)
app.command("eval")(evaluate.eval_command)
app.command("sweep")(evaluate.sweep_command)
app.command("ab-lines")(evaluate.ab_lines_command)
app.command("synth")(synth.synth_command)
