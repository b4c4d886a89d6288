"""Hyperparameter grid search over fold rotations.

Each (architecture, reduced_dim, hidden_dim, dropout_p) combination is
trained once per rotation; trials rank by mean validation AUROC, ties
broken by smaller parameter count. Test metrics are never consulted.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..errors import DataError
from ..records import DailyRecord
from ..split import SplitPlan
from .network import HyperParams

DEFAULT_GRID = {
    "reduced_dim": (2, 3, 4, 8),
    "hidden_dim": (16, 32, 64),
    "dropout_p": (0.1, 0.3, 0.5),
}


@dataclass
class GridTrial:
    architecture: str
    params: dict
    fold_aurocs: list[float] = field(default_factory=list)
    param_count: int = 0

    @property
    def mean_auroc(self) -> float:
        return float(np.mean(self.fold_aurocs))

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "params": dict(self.params),
            "fold_aurocs": list(self.fold_aurocs),
            "mean_auroc": self.mean_auroc,
            "param_count": self.param_count,
        }


def rank_trials(trials: list[GridTrial]) -> list[GridTrial]:
    return sorted(trials, key=lambda t: (-t.mean_auroc, t.param_count))


def trials_to_csv(trials: list[GridTrial]) -> str:
    lines = ["rank,architecture,reduced_dim,hidden_dim,dropout_p,mean_val_auroc,param_count"]
    for rank, t in enumerate(rank_trials(trials), start=1):
        lines.append(
            f"{rank},{t.architecture},{t.params['reduced_dim']},"
            f"{t.params['hidden_dim']},{t.params['dropout_p']!r},"
            f"{t.mean_auroc!r},{t.param_count}"
        )
    return "\n".join(lines) + "\n"


def trials_to_json(trials: list[GridTrial]) -> str:
    return json.dumps([t.to_dict() for t in rank_trials(trials)], indent=2, sort_keys=True)


def grid_search(
    architectures,
    records: list[DailyRecord],
    labels_by_subject: dict[str, bool],
    plan: SplitPlan,
    grid: dict | None = None,
    hp: HyperParams | None = None,
    clf_params: dict | None = None,
    jobs: int = 1,
) -> list[GridTrial]:
    """Train every grid combination per rotation; return ranked trials."""
    from ..evaluation import cross_validate  # circular at import time otherwise

    if isinstance(architectures, str):
        architectures = [architectures]
    if not architectures:
        raise DataError("grid_search: no architectures given")
    grid = dict(DEFAULT_GRID if grid is None else grid)
    for key in grid:
        if key not in DEFAULT_GRID:
            raise DataError(f"grid_search: unknown grid axis {key!r}")
        if not tuple(grid[key]):
            raise DataError(f"grid_search: empty grid axis {key!r}")
    axes = [tuple(grid.get(k, DEFAULT_GRID[k])) for k in ("reduced_dim", "hidden_dim", "dropout_p")]
    combos = [
        {"reduced_dim": int(r), "hidden_dim": int(h), "dropout_p": float(p)}
        for r, h, p in product(*axes)
    ]

    from ..pipeline import partition_indices
    from ..preprocess import PhysioFeatures
    from ..rng import derived_rng
    from ..text import Vocabulary
    from .classifier import FusionClassifier
    from .network import FusionNetwork

    # probe inputs for parameter counting: built once, no training involved
    train_idx, _, _ = partition_indices(records, plan, 1)
    probe_train = [records[i] for i in train_idx]
    probe_y = np.array([int(labels_by_subject[r.subject_id]) for r in probe_train])

    def run(arch: str, combo: dict) -> GridTrial:
        params = dict(clf_params or {})
        params.update(combo)
        report = cross_validate(
            arch, hp, records, labels_by_subject, plan, clf_params=params
        )
        kwargs = dict(hp.to_dict()) if hp is not None else {}
        kwargs.update(params)
        ref = FusionClassifier(architecture=arch, **kwargs)
        vocab = Vocabulary.build([r.text for r in probe_train], max_size=ref.vocab_size)
        feats = PhysioFeatures(alpha=ref.feature_alpha).fit(probe_train, probe_y)
        net = FusionNetwork(
            arch, len(vocab), feats.features_, ref._hp(), derived_rng(ref.seed, "init"),
            d_model=ref.d_model, n_heads=ref.n_heads, n_blocks=ref.n_blocks,
            ff_dim=ref.ff_dim, max_len=ref.max_len, pool=ref.pool,
        )
        return GridTrial(
            architecture=arch,
            params=combo,
            fold_aurocs=[rot.val["AUROC"] for rot in report.rotations],
            param_count=net.param_count,
        )

    tasks = [(a, c) for a in architectures for c in combos]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(lambda t: run(*t), tasks))
    else:
        trials = [run(a, c) for a, c in tasks]
    return rank_trials(trials)
