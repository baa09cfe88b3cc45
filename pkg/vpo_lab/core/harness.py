"""Experiment runner: base pretraining, trainer runs, sweeps and comparisons.

Output layout::

    <out>/config.json
    <out>/summary.json
    <out>/pretrain/<seed>/denoiser.json, curve.csv
    <out>/<label>/<seed>/policy.json, curve.csv, eval.csv[, pairs.json]
    <out>/rm_eval/<seed>/metrics.csv, candidates.csv

Every run owns its RNG streams and writes only into its own directory, so
runs can execute in a process pool and the summary is merged afterwards in
task order.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import diffusion, formats, rewards
from .dpo import generate_candidates
from .evaluation import evaluate_policy, reward_trend
from .errors import ConfigError, FormatError
from .pretrain import PretrainConfig, pretrain
from .refl import train_refl
from .rewards import Dimension, Feedback, RewardModel, parse_dimension, parse_feedback
from .settings import ModelConfig, build_section, load_settings, merge_sections, save_settings
from .toy_data import make_class_specs, make_dataset, make_prompts
from .trainers import (
    DimensionStats,
    TrainRunMetrics,
    VpoConfig,
    build_offline_dataset,
    run_streams,
    train_offline_dpo,
    train_online_vpo,
)

logger = logging.getLogger(__name__)

PRETRAIN_LABEL = "pretrain"
EVAL_STREAM = 1


class ExperimentKind(str, Enum):
    PRETRAIN = "pretrain"
    ONLINE_VPO = "online_vpo"
    OFFLINE_DPO = "offline_dpo"
    REFL = "refl"
    RM_EVAL = "rm_eval"
    SWEEP = "sweep"


TRAINERS = ("online_vpo", "online_dpo_fixed_ref", "offline_dpo", "refl")

EXPERIMENT_KEYS = (
    "kind",
    "seeds",
    "output_dir",
    "trainer",
    "eval_samples",
    "offline_pairs",
    "holdout",
    "workers",
    "rm_eval_sets",
    "rm_eval_candidates",
    "candidates_file",
)

DEFAULT_SWEEP_VALUES: Dict[str, List[Any]] = {
    "n_candidates": [2, 4, 6, 8],
    "k_interval": [100, 200, 400, 600],
    "dimension": [d.value for d in Dimension],
    "feedback": [f.value for f in Feedback],
    "trainer": list(TRAINERS),
}


def parse_k_interval(value: Any) -> Optional[int]:
    """``none``/``inf`` (or None) disable reference updates."""
    if value is None or str(value).strip().lower() in ("none", "inf", "null"):
        return None
    try:
        return int(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"k_interval must be an integer or 'none', got {value!r}") from e


def parse_trainer(value: str) -> str:
    value = str(value).strip().lower().replace("-", "_")
    if value not in TRAINERS:
        raise ConfigError(f"Unknown trainer '{value}'; expected one of {list(TRAINERS)}")
    return value


def _parse_sweep_value(param: str, value: Any) -> Any:
    try:
        if param == "n_candidates":
            return int(value)
        if param == "k_interval":
            return parse_k_interval(value)
        if param == "feedback":
            return parse_feedback(value).value
        if param == "dimension":
            return parse_dimension(value).value
        return parse_trainer(value)
    except ValueError as e:
        raise ConfigError(f"Bad value {value!r} for sweep over {param}: {e}") from e


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass
class ExperimentConfig:
    """What to run, on which seeds, and where the results go.

    ``trainer`` picks the training loop for N / K / dimension sweeps; the
    single-trainer kinds imply their own. ``offline_pairs`` defaults to the
    number of pairs the online trainer consumes (steps x batch_size).
    """

    kind: str = ExperimentKind.ONLINE_VPO.value
    seeds: List[int] = field(default_factory=lambda: [0])
    output_dir: Path = Path("runs")
    trainer: str = "online_vpo"
    eval_samples: int = 32
    offline_pairs: Optional[int] = None
    holdout: List[int] = field(default_factory=list)
    workers: int = 1
    rm_eval_sets: int = 200
    rm_eval_candidates: int = 8
    candidates_file: Optional[Path] = None
    sweep_param: Optional[str] = None
    sweep_values: List[Any] = field(default_factory=list)
    vpo: VpoConfig = field(default_factory=VpoConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)

    def __post_init__(self):
        try:
            self.kind = ExperimentKind(str(self.kind).strip().lower().replace("-", "_")).value
        except ValueError:
            raise ConfigError(
                f"Unknown experiment kind '{self.kind}'; expected one of {[k.value for k in ExperimentKind]}"
            ) from None
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("Seed list must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"Seed list has duplicates: {self.seeds}")
        self.output_dir = Path(self.output_dir)
        self.trainer = parse_trainer(self.trainer)
        if self.eval_samples < 1:
            raise ConfigError(f"eval_samples must be >= 1, got {self.eval_samples}")
        if self.offline_pairs is not None and self.offline_pairs < 1:
            raise ConfigError(f"offline_pairs must be >= 1, got {self.offline_pairs}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.rm_eval_sets < 1:
            raise ConfigError(f"rm_eval_sets must be >= 1, got {self.rm_eval_sets}")
        if self.rm_eval_candidates < 4:
            raise ConfigError(f"rm_eval_candidates must be >= 4, got {self.rm_eval_candidates}")
        if self.candidates_file is not None:
            self.candidates_file = Path(self.candidates_file)
        self.holdout = [int(c) for c in self.holdout]
        make_prompts(self.model.n_classes, self.holdout)

        if self.kind == ExperimentKind.SWEEP.value:
            if self.sweep_param not in DEFAULT_SWEEP_VALUES:
                raise ConfigError(
                    f"Sweep needs a parameter in {list(DEFAULT_SWEEP_VALUES)}, got {self.sweep_param!r}"
                )
            values = self.sweep_values or DEFAULT_SWEEP_VALUES[self.sweep_param]
            self.sweep_values = [_parse_sweep_value(self.sweep_param, v) for v in values]
            if len(set(map(str, self.sweep_values))) != len(self.sweep_values):
                raise ConfigError(f"Sweep values have duplicates: {self.sweep_values}")

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        """Sectioned form, the same shape a ``--config`` file uses."""
        experiment = {
            "kind": self.kind,
            "seeds": list(self.seeds),
            "output_dir": str(self.output_dir),
            "trainer": self.trainer,
            "eval_samples": self.eval_samples,
            "offline_pairs": self.offline_pairs,
            "holdout": list(self.holdout),
            "workers": self.workers,
            "rm_eval_sets": self.rm_eval_sets,
            "rm_eval_candidates": self.rm_eval_candidates,
            "candidates_file": None if self.candidates_file is None else str(self.candidates_file),
        }
        model = asdict(self.model)
        model["hidden"] = list(self.model.hidden)
        return {
            "experiment": experiment,
            "vpo": asdict(self.vpo),
            "model": model,
            "pretrain": asdict(self.pretrain),
            "sweep": {"param": self.sweep_param, "values": list(self.sweep_values)},
        }


def load_experiment_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Dict[str, Any]]] = None,
) -> ExperimentConfig:
    """Defaults, then the config file, then non-None overrides.

    Args:
        path: Optional JSON config file with sections experiment/vpo/model/pretrain/sweep
        overrides: Same sectioned shape; None values are ignored

    Returns:
        Validated ExperimentConfig
    """
    sections = load_settings(path) if path is not None else {}
    sections = merge_sections(sections, overrides)

    experiment = dict(sections.get("experiment", {}))
    sweep = dict(sections.get("sweep", {}))
    for name, values, allowed in (
        ("experiment", experiment, EXPERIMENT_KEYS),
        ("sweep", sweep, ("param", "values")),
    ):
        unknown = sorted(set(values) - set(allowed))
        if unknown:
            raise ConfigError(f"Unknown key(s) {unknown} in config section '{name}'")
    if "k_interval" in sections.get("vpo", {}):
        sections["vpo"]["k_interval"] = parse_k_interval(sections["vpo"]["k_interval"])

    return build_section(
        ExperimentConfig,
        {
            **experiment,
            "sweep_param": sweep.get("param"),
            "sweep_values": list(sweep.get("values") or []),
            "vpo": build_section(VpoConfig, sections.get("vpo", {}), "vpo"),
            "model": build_section(ModelConfig, sections.get("model", {}), "model"),
            "pretrain": build_section(PretrainConfig, sections.get("pretrain", {}), "pretrain"),
        },
        "experiment",
    )


# ============================================================================
# RUN RECORDS
# ============================================================================

@dataclass
class RunTask:
    """Everything one worker needs; plain data so it pickles."""

    label: str
    method: str
    seed: int
    vpo: VpoConfig
    model: ModelConfig
    pretrain: PretrainConfig
    output_root: Path
    eval_samples: int = 32
    offline_pairs: Optional[int] = None
    holdout: Tuple[int, ...] = ()
    rm_eval_sets: int = 200
    rm_eval_candidates: int = 8
    candidates_file: Optional[Path] = None

    @property
    def run_dir(self) -> Path:
        return self.output_root / self.label / str(self.seed)

    @property
    def base_path(self) -> Path:
        return self.output_root / PRETRAIN_LABEL / str(self.seed) / "denoiser.json"


@dataclass
class RunOutcome:
    label: str
    method: str
    seed: int
    ok: bool
    error: Optional[str] = None
    files: Dict[str, str] = field(default_factory=dict)
    final_stats: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    ranking: Dict[str, Dict[str, float]] = field(default_factory=dict)
    final_loss: Optional[float] = None
    reference_updates: List[int] = field(default_factory=list)
    trend: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["final_stats"] = {k: list(v) for k, v in self.final_stats.items()}
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "RunOutcome":
        record = dict(record)
        record["final_stats"] = {k: tuple(v) for k, v in record.get("final_stats", {}).items()}
        return cls(**record)


@dataclass
class MethodReport:
    """Final held-out statistics of one method, keyed by seed."""

    label: str
    finals: Dict[int, DimensionStats]
    curves: Dict[int, str] = field(default_factory=dict)


@dataclass
class PairwiseResult:
    """Per-seed win/loss/tie of method ``a`` against method ``b``."""

    a: str
    b: str
    dimension: str
    wins: int
    losses: int
    ties: int
    per_seed: Dict[int, str] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.wins + self.losses + self.ties

    @property
    def win_rate(self) -> float:
        return self.wins / self.n if self.n else 0.0

    def reversed(self) -> "PairwiseResult":
        flip = {"win": "loss", "loss": "win", "tie": "tie"}
        return PairwiseResult(
            a=self.b,
            b=self.a,
            dimension=self.dimension,
            wins=self.losses,
            losses=self.wins,
            ties=self.ties,
            per_seed={s: flip[o] for s, o in self.per_seed.items()},
        )

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["per_seed"] = {str(s): o for s, o in self.per_seed.items()}
        record["win_rate"] = self.win_rate
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "PairwiseResult":
        record = {k: v for k, v in record.items() if k != "win_rate"}
        record["per_seed"] = {int(s): o for s, o in record.get("per_seed", {}).items()}
        return cls(**record)


@dataclass
class ComparisonReport:
    kind: str
    dimension: str
    runs: List[RunOutcome] = field(default_factory=list)
    comparisons: List[PairwiseResult] = field(default_factory=list)

    @property
    def failures(self) -> List[RunOutcome]:
        return [r for r in self.runs if not r.ok]

    @property
    def ok(self) -> bool:
        return not self.failures

    def method_reports(self, include_pretrain: bool = False) -> List[MethodReport]:
        """Successful training runs grouped by label, in first-seen order."""
        reports: Dict[str, MethodReport] = {}
        for run in self.runs:
            if not run.ok or not run.final_stats:
                continue
            if run.label == PRETRAIN_LABEL and not include_pretrain:
                continue
            report = reports.setdefault(run.label, MethodReport(label=run.label, finals={}))
            report.finals[run.seed] = run.final_stats
            if "curve" in run.files:
                report.curves[run.seed] = run.files["curve"]
        return list(reports.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "runs": [r.to_dict() for r in self.runs],
            "comparisons": [c.to_dict() for c in self.comparisons],
        }

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "ComparisonReport":
        return cls(
            kind=record["kind"],
            dimension=record["dimension"],
            runs=[RunOutcome.from_dict(r) for r in record.get("runs", [])],
            comparisons=[PairwiseResult.from_dict(c) for c in record.get("comparisons", [])],
        )


def write_report(report: ComparisonReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_report(path: Path) -> ComparisonReport:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    try:
        with open(path, "r") as f:
            return ComparisonReport.from_dict(json.load(f))
    except FileNotFoundError as e:
        raise FormatError(f"No summary found at {path}") from e
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise FormatError(f"Could not read summary {path}: {e}") from e


# ============================================================================
# COMPARISON
# ============================================================================

def compare_methods(reports: Sequence[MethodReport], dimension: str) -> List[PairwiseResult]:
    """Pairwise per-seed ordering on the mean of ``dimension``.

    Every report must cover the same seeds. Equal means are ties, never wins.

    Raises:
        ConfigError: fewer than two reports or mismatched seed lists
    """
    dim = parse_dimension(dimension).value
    if len(reports) < 2:
        raise ConfigError(f"Need at least 2 method reports to compare, got {len(reports)}")
    seeds = sorted(reports[0].finals)
    for r in reports[1:]:
        if sorted(r.finals) != seeds:
            raise ConfigError(
                f"Seed mismatch: {reports[0].label} has {seeds}, {r.label} has {sorted(r.finals)}"
            )

    results = []
    for i, a in enumerate(reports):
        for b in reports[i + 1:]:
            per_seed = {}
            for s in seeds:
                va = a.finals[s][dim][0]
                vb = b.finals[s][dim][0]
                per_seed[s] = "win" if va > vb else "loss" if va < vb else "tie"
            outcomes = list(per_seed.values())
            results.append(
                PairwiseResult(
                    a=a.label,
                    b=b.label,
                    dimension=dim,
                    wins=outcomes.count("win"),
                    losses=outcomes.count("loss"),
                    ties=outcomes.count("tie"),
                    per_seed=per_seed,
                )
            )
    return results


# ============================================================================
# WORKERS
# ============================================================================

def _relative(path: Path, root: Path) -> str:
    return Path(path).relative_to(root).as_posix()


def _reward_model(model: ModelConfig, dimension: str) -> RewardModel:
    specs = make_class_specs(model.n_classes, seed=model.world_seed, dims=model.dims)
    return RewardModel.from_specs(specs, model.n_frames, model.dims, dimension=dimension)


def _eval_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, EVAL_STREAM]).generate_state(1)[0])


def _pretrain_base(task: RunTask) -> RunOutcome:
    model = task.model
    specs = make_class_specs(model.n_classes, seed=model.world_seed, dims=model.dims)
    dataset = make_dataset(
        specs, task.pretrain.n_per_class, model.n_frames, model.dims, task.pretrain.sigma_data, seed=task.seed
    )
    result = pretrain(
        model.denoiser(task.seed),
        dataset,
        epochs=task.pretrain.epochs,
        lr=task.pretrain.lr,
        seed=task.seed,
        sched=model.schedule(),
        batch_size=task.pretrain.batch_size,
    )
    checkpoint = diffusion.save_denoiser(result.denoiser, task.base_path)
    curve = formats.write_loss_csv(task.run_dir / "curve.csv", result.epoch_losses)
    return RunOutcome(
        label=task.label,
        method=task.method,
        seed=task.seed,
        ok=True,
        files={"checkpoint": _relative(checkpoint, task.output_root), "curve": _relative(curve, task.output_root)},
        final_loss=result.epoch_losses[-1] if result.epoch_losses else None,
    )


def _train(task: RunTask) -> RunOutcome:
    model = task.model
    sched = model.schedule()
    cfg = replace(task.vpo, seed=task.seed)
    rm = _reward_model(model, cfg.dimension)
    prompts = make_prompts(model.n_classes, task.holdout)
    eval_prompts = make_prompts(model.n_classes)
    eval_seed = _eval_seed(task.seed)

    def evaluator(policy):
        return evaluate_policy(policy, rm, eval_prompts, task.eval_samples, eval_seed, sched, cfg.sampler_steps)

    policy = diffusion.load_denoiser(task.base_path)
    files: Dict[str, Path] = {}
    metrics: TrainRunMetrics
    if task.method == "online_vpo":
        _, metrics = train_online_vpo(policy, rm, prompts, cfg, sched, evaluator=evaluator)
    elif task.method == "online_dpo_fixed_ref":
        cfg = replace(cfg, k_interval=None)
        _, metrics = train_online_vpo(policy, rm, prompts, cfg, sched, evaluator=evaluator, method=task.method)
    elif task.method == "offline_dpo":
        n_pairs = task.offline_pairs or cfg.steps * cfg.batch_size
        dataset = build_offline_dataset(policy, rm, prompts, n_pairs, cfg, sched, dataset_id=f"{task.label}-{task.seed}")
        files["pairs"] = formats.save_preference_dataset(task.run_dir / "pairs.json", dataset)
        _, metrics = train_offline_dpo(policy, dataset, cfg, sched, evaluator=evaluator)
    elif task.method == "refl":
        _, metrics = train_refl(policy, rm, prompts, cfg, sched, evaluator=evaluator)
    else:
        raise ConfigError(f"Unknown trainer '{task.method}'")

    files["policy"] = diffusion.save_denoiser(policy, task.run_dir / "policy.json")
    files["curve"] = formats.write_curve_csv(task.run_dir / "curve.csv", metrics)
    files["eval"] = formats.write_eval_csv(task.run_dir / "eval.csv", metrics)
    final = metrics.final_eval()
    trend = reward_trend(metrics.evals, cfg.dimension).to_dict() if metrics.evals else {}
    return RunOutcome(
        label=task.label,
        method=task.method,
        seed=task.seed,
        ok=True,
        files={k: _relative(p, task.output_root) for k, p in files.items()},
        final_stats=dict(final.stats) if final else {},
        final_loss=float(metrics.losses()[-1]),
        reference_updates=list(metrics.reference_updates),
        trend=trend,
    )


def _rm_eval(task: RunTask) -> RunOutcome:
    model = task.model
    rm = _reward_model(model, task.vpo.dimension)

    if task.candidates_file is not None:
        candidate_sets = formats.candidate_sets_from_batch(task.candidates_file)
    else:
        sched = model.schedule()
        policy = diffusion.load_denoiser(task.base_path)
        prompts = make_prompts(model.n_classes, task.holdout)
        streams = run_streams(task.seed)
        candidate_sets = []
        for i in range(task.rm_eval_sets):
            c = prompts[i % len(prompts)]
            candidates = generate_candidates(
                policy, c, task.rm_eval_candidates, sched, task.vpo.sampler_steps, streams.candidates
            )
            candidate_sets.append((c, candidates))

    scorers: Dict[str, rewards.Scorer] = {d.value: rewards.dimension_scorer(rm, d) for d in Dimension}
    scorers["per_frame"] = lambda y, c: rewards.frame_quality_score(rm, y, c)
    scorers["random"] = rewards.random_scorer(task.seed)

    oracle = rewards.template_oracle_best(rm)
    results = {name: rewards.evaluate_reward_model(s, candidate_sets, oracle) for name, s in scorers.items()}

    flat = [tr for _, cands in candidate_sets for tr in cands]
    groups = [g for g, (_, cands) in enumerate(candidate_sets) for _ in cands]
    files = {
        "metrics": formats.write_ranking_csv(task.run_dir / "metrics.csv", results),
        "candidates": formats.write_trajectory_batch(task.run_dir / "candidates.csv", flat, groups),
    }
    return RunOutcome(
        label=task.label,
        method=task.method,
        seed=task.seed,
        ok=True,
        files={k: _relative(p, task.output_root) for k, p in files.items()},
        ranking={name: m.as_dict() for name, m in results.items()},
    )


def execute_run(task: RunTask) -> RunOutcome:
    """Run one task; any failure is captured in the outcome, never raised."""
    try:
        if task.method == PRETRAIN_LABEL:
            return _pretrain_base(task)
        if task.method == ExperimentKind.RM_EVAL.value:
            return _rm_eval(task)
        if not task.base_path.exists():
            raise FormatError(f"Base model for seed {task.seed} is unavailable ({task.base_path})")
        return _train(task)
    except Exception as e:
        logger.warning("Run %s seed %d failed: %s", task.label, task.seed, e)
        return RunOutcome(label=task.label, method=task.method, seed=task.seed, ok=False, error=f"{type(e).__name__}: {e}")


def _execute_all(
    tasks: Sequence[RunTask],
    workers: int,
    on_run: Optional[Callable[[RunOutcome], None]],
) -> List[RunOutcome]:
    outcomes = []
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            outcome = execute_run(task)
            outcomes.append(outcome)
            if on_run is not None:
                on_run(outcome)
        return outcomes

    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(execute_run, task) for task in tasks]
        for future in futures:
            outcome = future.result()
            outcomes.append(outcome)
            if on_run is not None:
                on_run(outcome)
    return outcomes


# ============================================================================
# EXPERIMENTS
# ============================================================================

def _label_value(value: Any) -> str:
    return "none" if value is None else str(value)


def plan_runs(cfg: ExperimentConfig) -> List[Tuple[str, str, VpoConfig]]:
    """(label, method, trainer config) for every non-pretraining run label."""
    kind = ExperimentKind(cfg.kind)
    if kind == ExperimentKind.PRETRAIN:
        return []
    if kind in (ExperimentKind.ONLINE_VPO, ExperimentKind.OFFLINE_DPO, ExperimentKind.REFL, ExperimentKind.RM_EVAL):
        return [(kind.value, kind.value, cfg.vpo)]

    plan = []
    for value in cfg.sweep_values:
        if cfg.sweep_param == "trainer":
            plan.append((value, value, cfg.vpo))
        else:
            label = f"{cfg.sweep_param}-{_label_value(value)}"
            plan.append((label, cfg.trainer, replace(cfg.vpo, **{cfg.sweep_param: value})))
    return plan


def _make_task(cfg: ExperimentConfig, label: str, method: str, seed: int, vpo: VpoConfig) -> RunTask:
    return RunTask(
        label=label,
        method=method,
        seed=seed,
        vpo=vpo,
        model=cfg.model,
        pretrain=cfg.pretrain,
        output_root=cfg.output_dir,
        eval_samples=cfg.eval_samples,
        offline_pairs=cfg.offline_pairs,
        holdout=tuple(cfg.holdout),
        rm_eval_sets=cfg.rm_eval_sets,
        rm_eval_candidates=cfg.rm_eval_candidates,
        candidates_file=cfg.candidates_file,
    )


def run_experiment(
    cfg: ExperimentConfig,
    on_run: Optional[Callable[[RunOutcome], None]] = None,
) -> ComparisonReport:
    """Pretrain one base model per seed, run every planned label on every seed,
    then write ``summary.json`` and ``config.json`` under the output directory.

    A failing run is recorded in the report; its siblings still run.
    """
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Output directory {cfg.output_dir} is not writable: {e}") from e
    save_settings(cfg.to_dict(), cfg.output_dir / "config.json")

    plan = plan_runs(cfg)
    needs_base = cfg.kind != ExperimentKind.RM_EVAL.value or cfg.candidates_file is None
    base_tasks = [_make_task(cfg, PRETRAIN_LABEL, PRETRAIN_LABEL, s, cfg.vpo) for s in cfg.seeds] if needs_base else []
    logger.info("Experiment %s: %d seed(s), %d run label(s)", cfg.kind, len(cfg.seeds), len(plan))

    outcomes = _execute_all(base_tasks, cfg.workers, on_run)
    run_tasks = [_make_task(cfg, label, method, s, vpo) for label, method, vpo in plan for s in cfg.seeds]
    outcomes += _execute_all(run_tasks, cfg.workers, on_run)

    report = ComparisonReport(kind=cfg.kind, dimension=cfg.vpo.dimension, runs=outcomes)
    methods = report.method_reports()
    if len(methods) >= 2:
        common = set.intersection(*(set(m.finals) for m in methods))
        if common:
            matched = [
                replace(
                    m,
                    finals={s: v for s, v in m.finals.items() if s in common},
                    curves={s: v for s, v in m.curves.items() if s in common},
                )
                for m in methods
            ]
            report.comparisons = compare_methods(matched, cfg.vpo.dimension)

    write_report(report, cfg.output_dir / "summary.json")
    if report.failures:
        logger.warning("%d of %d runs failed", len(report.failures), len(report.runs))
    return report
