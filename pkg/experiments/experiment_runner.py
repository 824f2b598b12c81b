# Experiment jobs behind the CLI: train, eval, ablate, sweep, gradcheck, select
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from engine.gradcheck import DEFAULT_ABS_TOL, MAX_CHECKED_PARAMS, gradient_errors
from engine.network import logistic
from selection.model_selection import load_candidates, rows_document, selection_table, SelectionRow
from storage.run_store import RunStore, load_checkpoint, read_metrics
from structure.constraints import active_dimension, sensitivity_scores, structure_gradient_error
from structure.hebbian import HebbianTracker, hebbian_probs
from structure.structure_mask import activation_set
from tasks.task_generator import TaskSampler, task_rng, tasks_document
from training.meta_learner import (
    EvaluationSummary,
    MetaState,
    evaluate,
    init_state,
    train,
)
from training.metrics import MetricsRecord
from utils.config_manager import ABLATION_FIELDS, RunConfig, ablated, build_run_config, config_echo, with_overrides
from utils.errors import DivergenceError, PreconditionError
from utils.svg_plot import metrics_chart

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-5
GRADCHECK_STREAM = 4_000_000_007
DEFAULT_SWEEP_GRID = tuple(round(0.1 * step, 1) for step in range(1, 11))
SWEEP_FIXED_VALUE = 0.5


@dataclass
class RunReport:
    state: MetaState
    metrics: List[MetricsRecord]
    summary: Dict
    out_dir: Path
    evaluation: Optional[EvaluationSummary] = None
    evaluations: List[Dict] = field(default_factory=list)


def _final_metrics(metrics: Sequence[MetricsRecord]) -> Dict:
    return metrics[-1].to_row(include_timing=False) if metrics else {}


class ExperimentRunner:
    """Runs one command's worth of jobs against an output directory"""

    def __init__(self, plot: bool = False):
        self.plot = plot

    def _write_plot(self, store: RunStore):
        rows = read_metrics(store.metrics_path)
        if not rows:
            logger.warning("No metrics rows to plot")
            return None
        return store.write_text('curves.svg', metrics_chart(rows))

    def run_train(self, cfg: RunConfig, out_dir: Optional[str] = None) -> RunReport:
        """
        Train per cfg and persist metrics, checkpoints and a summary.

        Periodic checkpoints follow checkpoint_every; periodic held-out
        evaluation follows eval_every. On divergence the partial metrics and a
        'diverged' summary are flushed before the error propagates.
        """
        store = RunStore(out_dir or cfg.out_dir, cfg.metrics_filename, cfg.record_timing).prepare()
        train_cfg = cfg.train_config()
        echo = config_echo(cfg)
        sampler = TaskSampler(train_cfg.taskgen)
        evaluations: List[Dict] = []

        def on_iteration(record: MetricsRecord, state: MetaState):
            if state.iteration % cfg.checkpoint_every == 0 and state.iteration < cfg.iterations:
                store.save_checkpoint(state, echo)
            if cfg.eval_every and state.iteration % cfg.eval_every == 0:
                summary = evaluate(state, sampler.held_out(cfg.eval_tasks), cfg.adapt_steps, cfg.inner_lr)
                evaluations.append({'iteration': state.iteration, **summary.to_dict()})
                logger.info(f"eval @ {state.iteration}: {summary.metric_name}={summary.mean:.5f} ± {summary.std:.5f}")

        try:
            state, metrics = train(train_cfg, on_iteration)
        except DivergenceError as e:
            store.write_metrics(e.metrics)
            store.write_summary({
                'status': 'diverged',
                'error': str(e),
                'support_trace': e.trace,
                'iterations_completed': len(e.metrics),
                'config': echo,
            })
            raise

        store.write_metrics(metrics)
        store.save_checkpoint(state, echo, final=True)
        evaluation = evaluate(state, sampler.held_out(cfg.eval_tasks), cfg.adapt_steps, cfg.inner_lr)
        summary = {
            'status': 'ok',
            'mode': 'baseline' if state.dense else 'masked',
            'iterations': state.iteration,
            'final_metrics': _final_metrics(metrics),
            'evaluation': evaluation.to_dict(),
            'periodic_evaluations': evaluations,
            'final_density': state.density(),
            'task_checksum': state.task_digest,
            'config': echo,
        }
        store.write_summary(summary)
        if self.plot:
            self._write_plot(store)
        logger.info(f"Run finished: {evaluation.metric_name}={evaluation.mean:.5f} ± {evaluation.std:.5f}")
        return RunReport(state, metrics, summary, store.root, evaluation, evaluations)

    def run_eval(self, checkpoint_path: str, cfg: Optional[RunConfig] = None,
                 adapt_steps: Optional[int] = None, out_dir: Optional[str] = None) -> EvaluationSummary:
        """Adapt a checkpoint to fresh held-out tasks and write eval_summary.json"""
        state, echo = load_checkpoint(checkpoint_path)
        if cfg is None:
            cfg = build_run_config(echo)
        steps = cfg.adapt_steps if adapt_steps is None else adapt_steps
        if steps < 0:
            raise PreconditionError(f"adapt_steps must be non-negative, got {steps}")

        tasks = TaskSampler(cfg.taskgen_config()).held_out(cfg.eval_tasks)
        summary = evaluate(state, tasks, steps, cfg.inner_lr, cfg.n_jobs)
        store = RunStore(out_dir or Path(checkpoint_path).parent).prepare()
        store.write_summary({
            'checkpoint': str(checkpoint_path),
            'checkpoint_iteration': state.iteration,
            'adapt_steps': steps,
            **summary.to_dict(),
            'config': config_echo(cfg),
        }, name='eval_summary.json')
        return summary

    def run_ablate(self, cfg: RunConfig, disable: str, out_dir: Optional[str] = None) -> Dict:
        """Full and ablated arms with shared seeds, plus a delta summary"""
        reduced = ablated(cfg, disable)
        root = Path(out_dir or cfg.out_dir)
        full = self.run_train(cfg, str(root / 'full'))
        without = self.run_train(reduced, str(root / f"no_{disable}"))

        delta = {
            key: without.summary['final_metrics'][key] - full.summary['final_metrics'][key]
            for key in full.summary['final_metrics'] if key != 'iteration'
        }
        summary = {
            'disabled': disable,
            'field': ABLATION_FIELDS[disable],
            'full': {'evaluation': full.evaluation.to_dict(), 'final_metrics': full.summary['final_metrics'],
                     'task_checksum': full.summary['task_checksum']},
            'ablated': {'evaluation': without.evaluation.to_dict(), 'final_metrics': without.summary['final_metrics'],
                        'task_checksum': without.summary['task_checksum']},
            'delta_final_metrics': delta,
            'delta_evaluation_mean': without.evaluation.mean - full.evaluation.mean,
            'shared_tasks': full.summary['task_checksum'] == without.summary['task_checksum'],
        }
        RunStore(root).prepare().write_summary(summary, name='ablation_summary.json')
        return summary

    def run_sweep(self, cfg: RunConfig, constraint: str, grid: Sequence[float] = DEFAULT_SWEEP_GRID,
                  out_dir: Optional[str] = None) -> List[Dict]:
        """Vary one λ over the grid with the other two held at 0.5"""
        if constraint not in ABLATION_FIELDS:
            raise PreconditionError(f"Unknown constraint '{constraint}', expected one of {sorted(ABLATION_FIELDS)}")
        if not grid:
            raise PreconditionError("Sweep grid is empty")
        root = Path(out_dir or cfg.out_dir)
        swept = ABLATION_FIELDS[constraint]
        rows = []
        for value in grid:
            updates = {name: SWEEP_FIXED_VALUE for name in ABLATION_FIELDS.values()}
            updates[swept] = float(value)
            point = with_overrides(cfg, **updates)
            report = self.run_train(point, str(root / f"{swept}_{value:g}"))
            rows.append({
                swept: float(value),
                'evaluation_mean': report.evaluation.mean,
                'evaluation_std': report.evaluation.std,
                'density': report.evaluation.density,
                'overlap': report.evaluation.overlap,
                **{f"final_{key}": metric for key, metric in report.summary['final_metrics'].items()
                   if key != 'iteration'},
            })
        RunStore(root).prepare().write_summary({'swept': swept, 'rows': rows}, name='sweep_summary.json')
        return rows

    def run_gradcheck(self, cfg: RunConfig, corrupt: bool = False) -> Dict:
        """
        Finite-difference check of the weight-loss gradients (weights and mask
        logits) and of the structure-loss logit gradient on one sampled task.
        """
        train_cfg = cfg.train_config()
        state = init_state(train_cfg)
        net = state.net
        if net.n_params > MAX_CHECKED_PARAMS:
            raise PreconditionError(f"Gradient check is limited to {MAX_CHECKED_PARAMS} parameters, got {net.n_params}")

        rng = task_rng(cfg.seed, GRADCHECK_STREAM)
        task = TaskSampler(train_cfg.taskgen).sample(0, 1)[0]
        logits = state.mask.logits + rng.normal(0.0, 0.5, size=state.mask.size)
        weight_report = gradient_errors(net, logits, task.support_inputs, task.support_targets,
                                        task.kind, abs_tol=DEFAULT_ABS_TOL, corrupt=corrupt)

        tracker = HebbianTracker(rng.uniform(0.0, 2.0, size=state.mask.size), cfg.hebbian_decay,
                                 cfg.hebbian_temperature)
        other_probs = [logistic(rng.normal(0.0, 1.0, size=state.mask.size))]
        s = sensitivity_scores(net, logits, task.all_inputs, task.all_targets, task.kind)
        d = active_dimension(net, activation_set(logistic(logits), cfg.threshold))
        structure_error = structure_gradient_error(
            net, logits, hebbian_probs(tracker), other_probs, s, train_cfg.structure, d, task.n_samples,
            cfg.threshold, corrupt=corrupt,
        )

        report = {
            'weights': weight_report['weights'],
            'mask_logits': weight_report['mask_logits'],
            'structure_logits': structure_error,
            'tolerance': GRADCHECK_TOLERANCE,
            'n_params': net.n_params,
            'mask_size': net.mask_size,
        }
        report['passed'] = all(report[key] < GRADCHECK_TOLERANCE
                               for key in ('weights', 'mask_logits', 'structure_logits'))
        log = logger.info if report['passed'] else logger.error
        log(f"Gradient check {'passed' if report['passed'] else 'FAILED'}: "
            f"weights={report['weights']:.3e} mask={report['mask_logits']:.3e} "
            f"structure={report['structure_logits']:.3e}")
        return report

    def run_select(self, candidates_path: str, n_samples: Optional[int] = None,
                   out_dir: Optional[str] = None) -> List[SelectionRow]:
        candidates, file_samples = load_candidates(candidates_path)
        samples = n_samples if n_samples is not None else file_samples
        if samples is None:
            raise PreconditionError("Sample count N is required (file 'n_samples' or --samples)")
        rows = selection_table(candidates, int(samples))
        if out_dir:
            RunStore(out_dir).prepare().write_summary(rows_document(rows, int(samples)), name='selection.json')
        return rows

    def run_dump_tasks(self, cfg: RunConfig, iteration: int = 0, out_dir: Optional[str] = None) -> Path:
        """Write the meta-batch of one training iteration as tasks_<iteration>.json"""
        if iteration < 0:
            raise PreconditionError(f"Iteration must be non-negative, got {iteration}")
        tasks = TaskSampler(cfg.taskgen_config()).sample(iteration, cfg.meta_batch)
        store = RunStore(out_dir or cfg.out_dir).prepare()
        return store.write_summary(tasks_document(tasks, config_echo(cfg)), name=f"tasks_{iteration:06d}.json")
