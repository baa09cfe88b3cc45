"""On-disk record formats: trajectories, preference datasets, curves, metrics.

Trajectory CSV (one trajectory)::

    # condition=2 seed=17
    d0,d1
    0.12,0.98
    ...

Trajectory batch CSV (many trajectories, one row per frame)::

    item,group,condition,seed,frame,d0,d1

``group`` ties candidates of one ranking query together; ``seed`` is -1
when unknown. Floats are written with 17 significant digits so files
round-trip exactly and reruns are byte-identical.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .diffusion import Trajectory
from .dpo import PreferencePair
from .errors import FormatError
from .rewards import Dimension, RankingMetrics
from .trainers import OfflineDataset, TrainRunMetrics

FLOAT_FORMAT = "%.17g"
PREFERENCE_FORMAT = "vpo-lab/preference-pairs"
PREFERENCE_VERSION = 1


def _write_frame(df: pd.DataFrame, path: Path, header_line: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        if header_line is not None:
            f.write(header_line + "\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


# ============================================================================
# TRAJECTORIES
# ============================================================================

def write_trajectory_csv(path: Path, tr: Trajectory) -> Path:
    seed = "none" if tr.seed is None else str(tr.seed)
    df = pd.DataFrame(tr.frames, columns=[f"d{j}" for j in range(tr.dims)])
    return _write_frame(df, path, header_line=f"# condition={tr.condition} seed={seed}")


def read_trajectory_csv(path: Path) -> Trajectory:
    with open(path, "r") as f:
        header = f.readline().strip()
    if not header.startswith("#"):
        raise FormatError(f"{path}: missing '# condition=... seed=...' header")
    try:
        fields = dict(item.split("=", 1) for item in header.lstrip("#").split())
        condition = int(fields["condition"])
        seed = None if fields.get("seed", "none") == "none" else int(fields["seed"])
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: bad trajectory header {header!r}") from e
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    return Trajectory(frames=df.to_numpy(dtype=np.float64), condition=condition, seed=seed)


def write_trajectory_batch(
    path: Path,
    trajectories: Sequence[Trajectory],
    groups: Optional[Sequence[int]] = None,
) -> Path:
    if groups is None:
        groups = [0] * len(trajectories)
    if len(groups) != len(trajectories):
        raise FormatError(f"{len(trajectories)} trajectories but {len(groups)} group labels")
    rows = []
    for item, (tr, group) in enumerate(zip(trajectories, groups)):
        seed = -1 if tr.seed is None else tr.seed
        for f, frame in enumerate(tr.frames):
            rows.append([item, int(group), tr.condition, seed, f, *frame.tolist()])
    dims = trajectories[0].dims if trajectories else 0
    columns = ["item", "group", "condition", "seed", "frame"] + [f"d{j}" for j in range(dims)]
    return _write_frame(pd.DataFrame(rows, columns=columns), path)


def read_trajectory_batch(path: Path) -> Tuple[List[Trajectory], List[int]]:
    """Load a batch file.

    Returns:
        Tuple of (trajectories in item order, group label per trajectory)
    """
    df = pd.read_csv(path, float_precision="round_trip")
    required = {"item", "group", "condition", "seed", "frame"}
    if not required.issubset(df.columns):
        raise FormatError(f"{path}: batch file needs columns {sorted(required)}")
    dim_cols = [c for c in df.columns if c.startswith("d")]

    trajectories = []
    groups = []
    for _, rows in df.sort_values(["item", "frame"]).groupby("item", sort=True):
        first = rows.iloc[0]
        seed = int(first["seed"])
        trajectories.append(
            Trajectory(
                frames=rows[dim_cols].to_numpy(dtype=np.float64),
                condition=int(first["condition"]),
                seed=None if seed < 0 else seed,
            )
        )
        groups.append(int(first["group"]))
    return trajectories, groups


def candidate_sets_from_batch(path: Path) -> List[Tuple[int, List[Trajectory]]]:
    """Group a batch file into ``(condition, candidates)`` ranking queries."""
    trajectories, groups = read_trajectory_batch(path)
    sets: Dict[int, List[Trajectory]] = {}
    for tr, g in zip(trajectories, groups):
        sets.setdefault(g, []).append(tr)
    result = []
    for g in sorted(sets):
        conditions = {tr.condition for tr in sets[g]}
        if len(conditions) != 1:
            raise FormatError(f"{path}: group {g} mixes conditions {sorted(conditions)}")
        result.append((conditions.pop(), sets[g]))
    return result


# ============================================================================
# PREFERENCE DATASETS
# ============================================================================

def _trajectory_record(tr: Trajectory) -> dict:
    return {"condition": tr.condition, "seed": tr.seed, "frames": tr.frames.tolist()}


def _trajectory_from_record(record: dict) -> Trajectory:
    return Trajectory(frames=np.array(record["frames"]), condition=record["condition"], seed=record["seed"])


def save_preference_dataset(path: Path, dataset: OfflineDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "format": PREFERENCE_FORMAT,
        "version": PREFERENCE_VERSION,
        "dataset_id": dataset.dataset_id,
        "pairs": [
            {
                "condition": p.condition,
                "source": p.source,
                "winner_score": p.winner_score,
                "loser_score": p.loser_score,
                "winner_index": p.winner_index,
                "loser_index": p.loser_index,
                "winner": _trajectory_record(p.winner),
                "loser": _trajectory_record(p.loser),
            }
            for p in dataset.pairs
        ],
        "candidate_means": list(dataset.candidate_means),
    }
    with open(path, "w") as f:
        json.dump(record, f)
    return path


def load_preference_dataset(path: Path) -> OfflineDataset:
    try:
        with open(path, "r") as f:
            record = json.load(f)
        if record.get("format") != PREFERENCE_FORMAT or record.get("version") != PREFERENCE_VERSION:
            raise FormatError(f"{path}: not a version {PREFERENCE_VERSION} preference dataset")
        pairs = tuple(
            PreferencePair(
                condition=p["condition"],
                winner=_trajectory_from_record(p["winner"]),
                loser=_trajectory_from_record(p["loser"]),
                source=p["source"],
                winner_score=p["winner_score"],
                loser_score=p["loser_score"],
                winner_index=p["winner_index"],
                loser_index=p["loser_index"],
            )
            for p in record["pairs"]
        )
        return OfflineDataset(
            dataset_id=record["dataset_id"],
            pairs=pairs,
            candidate_means=tuple(record["candidate_means"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise FormatError(f"Could not read preference dataset {path}: {e}") from e


# ============================================================================
# CURVES AND METRICS
# ============================================================================

def curve_frame(metrics: TrainRunMetrics) -> pd.DataFrame:
    """One row per optimization step."""
    rows = []
    for r in metrics.steps:
        row = {
            "step": r.step,
            "loss": r.loss,
            "gap": r.gap,
            "pairs": r.pairs,
            "skipped": int(r.skipped),
            "ref_update": int(r.ref_updated),
        }
        for dim in Dimension:
            row[f"mean_{dim.value}"] = r.candidate_means[dim.value]
        rows.append(row)
    return pd.DataFrame(rows)


def write_curve_csv(path: Path, metrics: TrainRunMetrics) -> Path:
    return _write_frame(curve_frame(metrics), path)


def write_eval_csv(path: Path, metrics: TrainRunMetrics) -> Path:
    rows = []
    for record in metrics.evals:
        row = {"step": record.step}
        for dim in Dimension:
            mean, std = record.stats[dim.value]
            row[f"{dim.value}_mean"] = mean
            row[f"{dim.value}_std"] = std
        rows.append(row)
    return _write_frame(pd.DataFrame(rows), path)


def write_loss_csv(path: Path, losses: Sequence[float]) -> Path:
    df = pd.DataFrame({"epoch": np.arange(1, len(losses) + 1), "loss": list(losses)})
    return _write_frame(df, path)


def write_ranking_csv(path: Path, results: Dict[str, RankingMetrics]) -> Path:
    """One row per (reward model, metric)."""
    rows = [
        {"reward_model": name, "metric": metric, "value": value}
        for name, bundle in results.items()
        for metric, value in bundle.as_dict().items()
    ]
    return _write_frame(pd.DataFrame(rows, columns=["reward_model", "metric", "value"]), path)
