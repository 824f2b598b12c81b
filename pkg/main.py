# Command-line entry point for NeuronML Lab
import logging
import os
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from experiments.experiment_runner import DEFAULT_SWEEP_GRID, ExperimentRunner
from training.meta_learner import EvaluationSummary
from utils.config_manager import RunConfig, load_run_config
from utils.errors import NeuronMLError, PreconditionError
from utils.logging_setup import configure_logging, load_environment

logger = logging.getLogger(__name__)

app = typer.Typer(
    help="Meta-learning with learnable structure masks: train, evaluate, ablate, check and select.",
    add_completion=False,
    no_args_is_help=True,
)
console = Console()
err_console = Console(stderr=True)


class Constraint(str, Enum):
    fr = "fr"
    pl = "pl"
    se = "se"


ConfigOption = typer.Option(None, '--config', help="JSON run config (flat key/value)")
SeedOption = typer.Option(None, '--seed', min=0, help="Override the config seed")
OutOption = typer.Option(None, '--out', help="Output directory (default: config out_dir or NEURONML_OUT_DIR)")
LogLevelOption = typer.Option(None, '--log-level', help="Logging level (default: NEURONML_LOG_LEVEL or INFO)")
PlotOption = typer.Option(False, '--plot', help="Write curves.svg next to the metrics file")


@contextmanager
def exit_codes() -> Iterator[None]:
    """Map library errors onto the documented exit codes"""
    try:
        yield
    except NeuronMLError as e:
        logger.error(f"{type(e).__name__}: {e}")
        err_console.print(f"[bold red]{type(e).__name__}[/bold red]: {e}")
        raise typer.Exit(code=e.exit_code)


def _load(config: Optional[Path], seed: Optional[int], out: Optional[Path], log_level: Optional[str]) -> RunConfig:
    load_environment()
    configure_logging(log_level)
    cfg = load_run_config(str(config) if config else None,
                          {'seed': seed, 'out_dir': str(out) if out else None})
    configure_logging(log_level, os.path.join(cfg.out_dir, 'run.log'))
    return cfg


def _evaluation_table(title: str, summary: EvaluationSummary) -> Table:
    table = Table(title=title)
    table.add_column("metric")
    table.add_column("mean ± std", justify="right")
    table.add_column("density", justify="right")
    table.add_column("overlap", justify="right")
    table.add_column("tasks", justify="right")
    table.add_row(summary.metric_name, f"{summary.mean:.5f} ± {summary.std:.5f}", f"{summary.density:.4f}",
                  f"{summary.overlap:.4f}", str(len(summary.per_task)))
    return table


@app.command()
def train(config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
          out: Optional[Path] = OutOption, plot: bool = PlotOption,
          baseline: bool = typer.Option(False, '--baseline', help="First-order MAML with the mask frozen at all-ones"),
          log_level: Optional[str] = LogLevelOption):
    """Meta-train and write metrics, checkpoints and a summary."""
    with exit_codes():
        cfg = _load(config, seed, out, log_level)
        if baseline:
            cfg = cfg.model_copy(update={'baseline': True})
        report = ExperimentRunner(plot=plot).run_train(cfg)
    console.print(_evaluation_table(f"held-out evaluation ({report.out_dir})", report.evaluation))


@app.command('eval')
def eval_command(checkpoint: Path = typer.Argument(..., help="Checkpoint JSON written by train"),
                 config: Optional[Path] = typer.Option(None, '--config',
                                                       help="Task config (default: the checkpoint's config echo)"),
                 adapt_steps: Optional[int] = typer.Option(None, '--adapt-steps', min=0, help="Inner steps per task"),
                 seed: Optional[int] = SeedOption, out: Optional[Path] = OutOption,
                 log_level: Optional[str] = LogLevelOption):
    """Adapt a checkpoint to fresh held-out tasks and report the query metric."""
    with exit_codes():
        load_environment()
        configure_logging(log_level)
        cfg = None
        if config or seed is not None:
            cfg = load_run_config(str(config) if config else None, {'seed': seed})
        summary = ExperimentRunner().run_eval(str(checkpoint), cfg, adapt_steps, str(out) if out else None)
    console.print(_evaluation_table(f"evaluation of {checkpoint}", summary))
    if summary.curve:
        console.print("adaptation curve: " + ", ".join(f"{value:.5f}" for value in summary.curve))


@app.command()
def ablate(disable: Constraint = typer.Option(..., '--disable', help="Constraint to switch off"),
           config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
           out: Optional[Path] = OutOption, plot: bool = PlotOption,
           log_level: Optional[str] = LogLevelOption):
    """Run the full config and the config with one constraint disabled, on shared seeds."""
    with exit_codes():
        cfg = _load(config, seed, out, log_level)
        summary = ExperimentRunner(plot=plot).run_ablate(cfg, disable.value)

    table = Table(title=f"ablation: {summary['field']} = 0")
    table.add_column("arm")
    table.add_column("eval mean ± std", justify="right")
    table.add_column("density", justify="right")
    table.add_column("overlap", justify="right")
    for arm in ('full', 'ablated'):
        evaluation = summary[arm]['evaluation']
        table.add_row(arm, f"{evaluation['mean']:.5f} ± {evaluation['std']:.5f}",
                      f"{evaluation['density']:.4f}", f"{evaluation['overlap']:.4f}")
    console.print(table)
    console.print(f"shared task sequence: {summary['shared_tasks']}")


@app.command()
def sweep(constraint: Constraint = typer.Option(..., '--lambda', help="Constraint whose weight is swept"),
          grid: Optional[str] = typer.Option(None, '--grid', help="Comma-separated values (default 0.1..1.0)"),
          config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
          out: Optional[Path] = OutOption, log_level: Optional[str] = LogLevelOption):
    """Vary one constraint weight with the other two fixed at 0.5."""
    with exit_codes():
        cfg = _load(config, seed, out, log_level)
        values: List[float] = list(DEFAULT_SWEEP_GRID)
        if grid:
            try:
                values = [float(item) for item in grid.split(',') if item.strip()]
            except ValueError as e:
                raise PreconditionError(f"Invalid --grid value: {e}") from e
        rows = ExperimentRunner().run_sweep(cfg, constraint.value, values)

    swept = next(iter(rows[0]))
    table = Table(title=f"sweep over {swept}")
    table.add_column(swept, justify="right")
    table.add_column("eval mean ± std", justify="right")
    table.add_column("density", justify="right")
    table.add_column("overlap", justify="right")
    for row in rows:
        table.add_row(f"{row[swept]:g}", f"{row['evaluation_mean']:.5f} ± {row['evaluation_std']:.5f}",
                      f"{row['density']:.4f}", f"{row['overlap']:.4f}")
    console.print(table)


@app.command()
def gradcheck(config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
              log_level: Optional[str] = LogLevelOption,
              corrupt_grad: bool = typer.Option(False, '--corrupt-grad', hidden=True)):
    """Compare analytic gradients with central finite differences."""
    with exit_codes():
        load_environment()
        configure_logging(log_level)
        cfg = load_run_config(str(config) if config else None, {'seed': seed})
        report = ExperimentRunner().run_gradcheck(cfg, corrupt=corrupt_grad)

    table = Table(title=f"gradient check ({report['n_params']} parameters, {report['mask_size']} mask logits)")
    table.add_column("gradient")
    table.add_column("max relative error", justify="right")
    for key, label in (('weights', 'weight loss / weights'), ('mask_logits', 'weight loss / mask logits'),
                       ('structure_logits', 'structure loss / mask logits')):
        table.add_row(label, f"{report[key]:.3e}")
    console.print(table)
    console.print("PASS" if report['passed'] else f"FAIL (tolerance {report['tolerance']:g})")
    if not report['passed']:
        raise typer.Exit(code=1)


@app.command()
def select(candidates: Path = typer.Argument(..., help="Candidates JSON file"),
           samples: Optional[int] = typer.Option(None, '--samples', min=1, help="Sample count N"),
           out: Optional[Path] = OutOption, log_level: Optional[str] = LogLevelOption):
    """Rank candidate models by BIC evidence and posterior probability."""
    with exit_codes():
        load_environment()
        configure_logging(log_level)
        rows = ExperimentRunner().run_select(str(candidates), samples, str(out) if out else None)

    table = Table(title="model selection")
    table.add_column("")
    table.add_column("candidate")
    table.add_column("K", justify="right")
    table.add_column("evidence", justify="right")
    table.add_column("posterior", justify="right")
    for row in rows:
        table.add_row("*" if row.selected else "", row.label, str(row.n_params),
                      f"{row.evidence:.4f}", f"{row.posterior:.6f}")
    console.print(table)


@app.command('dump-tasks')
def dump_tasks(config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
               iteration: int = typer.Option(0, '--iteration', min=0, help="Training iteration whose batch is dumped"),
               out: Optional[Path] = OutOption, log_level: Optional[str] = LogLevelOption):
    """Write one training batch as structured text for cross-implementation comparison."""
    with exit_codes():
        cfg = _load(config, seed, out, log_level)
        path = ExperimentRunner().run_dump_tasks(cfg, iteration)
    console.print(f"wrote {path}")


def main():
    app()


if __name__ == '__main__':
    main()
