"""
Module for running rating-prediction experiments and reporting MAE/RMSE
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from src.exceptions import ParameterError, RatingsValidationError, ReportIntegrityError
from src.iwo import IwoParams
from src.predictor import (
    DEFAULT_HOLDOUT_FRACTION,
    UserModel,
    fit_user_weights,
    predict_for,
    user_seed,
)
from src.ratings import RatingMatrix, SplitConfig, split_ratings
from src.seeding import seeded_rng
from src.similarity import SimilarityParams, select_important_users

logger = logging.getLogger(__name__)

BASELINES = ('proposed', 'user-mean', 'pcc-topk-unweighted')

REFERENCE_LABEL = 'published, not reproduced'

# Published MAE / RMSE of comparison systems, keyed by dataset format
REFERENCE_RESULTS: Dict[str, Dict[str, Dict[str, float]]] = {
    'filmtrust': {
        'Bobadilla': {'mae': 0.771, 'rmse': 0.982},
        'Yilmaz': {'mae': 0.685, 'rmse': 0.912},
        'TARS': {'mae': 0.662, 'rmse': 0.872},
        'TCFACO': {'mae': 0.561, 'rmse': 0.764},
        'IWO-weighted': {'mae': 0.545, 'rmse': 0.656},
    },
    'epinions': {
        'Bobadilla': {'mae': 0.862, 'rmse': 1.124},
        'Yilmaz': {'mae': 0.852, 'rmse': 1.101},
        'TARS': {'mae': 0.830, 'rmse': 1.092},
        'TCFACO': {'mae': 0.795, 'rmse': 1.043},
        'IWO-weighted': {'mae': 0.710, 'rmse': 0.961},
    },
}

TOLERANCE = 1e-12


class PairPrediction(NamedTuple):
    user: int
    item: int
    true: float
    predicted: float
    used_fallback: bool


def mae(residuals: Sequence[float]) -> float:
    """Mean absolute residual."""
    values = np.asarray(residuals, dtype=float)
    if values.size == 0:
        raise ParameterError("MAE of an empty residual list is undefined")
    return float(np.mean(np.abs(values)))


def rmse(residuals: Sequence[float]) -> float:
    """Root mean squared residual."""
    values = np.asarray(residuals, dtype=float)
    if values.size == 0:
        raise ParameterError("RMSE of an empty residual list is undefined")
    return float(np.sqrt(np.mean(values * values)))


def _residuals(per_pair: Sequence[PairPrediction]) -> List[float]:
    return [p.predicted - p.true for p in per_pair]


@dataclass
class EvaluationReport:
    """
    Outcome of one experiment.

    Construct with `from_pairs` so the aggregates match the per-pair records;
    the constructor re-checks that they do.
    """
    dataset: str
    baseline: str
    z_predictions: int
    mae: float
    rmse: float
    coverage: float
    per_pair: List[PairPrediction]
    config_snapshot: Dict[str, Any]
    elapsed: float = 0.0
    sampled_users: Optional[int] = None
    reference_results: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.z_predictions != len(self.per_pair):
            raise ReportIntegrityError(f"Z={self.z_predictions} but {len(self.per_pair)} pairs recorded")
        if self.rmse < self.mae - TOLERANCE:
            raise ReportIntegrityError(f"RMSE {self.rmse} below MAE {self.mae}")
        residuals = _residuals(self.per_pair)
        if abs(mae(residuals) - self.mae) > TOLERANCE or abs(rmse(residuals) - self.rmse) > TOLERANCE:
            raise ReportIntegrityError("Aggregates do not match the per-pair records")
        if not 0.0 <= self.coverage <= 1.0:
            raise ReportIntegrityError(f"Coverage {self.coverage} outside [0, 1]")

    @classmethod
    def from_pairs(cls, dataset: str, baseline: str, per_pair: List[PairPrediction],
                   config_snapshot: Dict[str, Any], **kwargs) -> 'EvaluationReport':
        residuals = _residuals(per_pair)
        covered = sum(1 for p in per_pair if not p.used_fallback)
        return cls(
            dataset=dataset,
            baseline=baseline,
            z_predictions=len(per_pair),
            mae=mae(residuals),
            rmse=rmse(residuals),
            coverage=covered / len(per_pair),
            per_pair=list(per_pair),
            config_snapshot=dict(config_snapshot),
            **kwargs,
        )

    def to_dict(self, include_elapsed: bool = False) -> Dict[str, Any]:
        data = {
            'dataset': self.dataset,
            'baseline': self.baseline,
            'z_predictions': self.z_predictions,
            'mae': self.mae,
            'rmse': self.rmse,
            'coverage': self.coverage,
            'sampled_users': self.sampled_users,
            'config_snapshot': self.config_snapshot,
            'reference_results': {
                'label': REFERENCE_LABEL,
                'rows': self.reference_results,
            } if self.reference_results else {},
            'per_pair': [p._asdict() for p in self.per_pair],
        }
        if include_elapsed:
            data['elapsed'] = self.elapsed
        return data


def _predict_user(train: RatingMatrix, test_profile: Dict[int, float], user: int, baseline: str,
                  sim_params: SimilarityParams, iwo_params: IwoParams,
                  holdout_fraction: float, global_seed: int) -> List[PairPrediction]:
    model: Optional[UserModel] = None
    if baseline == 'pcc-topk-unweighted' and train.has_user(user):
        neighbors = select_important_users(train, user, sim_params)
        model = UserModel(user, neighbors, np.ones(len(neighbors)), float('nan'),
                          fallback_only=not neighbors)
    elif baseline == 'proposed' and train.has_user(user) and len(train.profile(user)) >= 2:
        model = fit_user_weights(train, user, sim_params, iwo_params,
                                 user_seed(global_seed, user), holdout_fraction)

    pairs = []
    for item in sorted(test_profile):
        prediction = predict_for(train, model, user, item)
        if baseline == 'user-mean':
            used_fallback = prediction.tier != 'user-mean'
        else:
            used_fallback = prediction.used_fallback
        pairs.append(PairPrediction(user, item, test_profile[item], prediction.value, used_fallback))
    return pairs


def _predict_chunk(train: RatingMatrix, test: RatingMatrix, users: Sequence[int], baseline: str,
                   sim_params: SimilarityParams, iwo_params: IwoParams,
                   holdout_fraction: float, global_seed: int) -> List[PairPrediction]:
    pairs = []
    for user in users:
        pairs.extend(_predict_user(train, dict(test.ratings[user]), user, baseline,
                                   sim_params, iwo_params, holdout_fraction, global_seed))
    return pairs


def run_experiment(dataset: RatingMatrix, sim_params: SimilarityParams, iwo_params: IwoParams,
                   split_config: SplitConfig, baseline: str = 'proposed', *,
                   dataset_name: str = 'dataset', dataset_format: Optional[str] = None,
                   fitness_holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION,
                   global_seed: int = 42, workers: int = 1,
                   sampled_users: Optional[int] = None,
                   show_progress: bool = False) -> EvaluationReport:
    """
    Split, fit and predict every test pair with one method.

    Args:
        dataset: Full rating matrix.
        sim_params: Similarity filter parameters.
        iwo_params: Optimizer parameters.
        split_config: Test fraction and split seed.
        baseline: 'proposed', 'user-mean' or 'pcc-topk-unweighted'.
        dataset_name: Name recorded in the report.
        dataset_format: Selects the published reference rows attached to the report.
        fitness_holdout_fraction: Share of each user's train items used to score weights.
        global_seed: Seed the per-user seeds derive from.
        workers: Worker processes for per-user fitting.
        sampled_users: Number of sampled users, recorded when the dataset is a subsample.
        show_progress: Show a progress bar.

    Returns:
        EvaluationReport: Per-pair predictions ordered by (user, item) plus aggregates.

    Raises:
        ParameterError: On an unknown baseline or a non-positive worker count.
        RatingsValidationError: If the split leaves no test ratings.
    """
    if baseline not in BASELINES:
        raise ParameterError(f"Unknown baseline {baseline!r}; expected one of {list(BASELINES)}")
    if workers < 1:
        raise ParameterError(f"Worker count must be positive, got {workers}")

    started = time.perf_counter()
    split = split_ratings(dataset, split_config.fraction, split_config.seed)
    if split.test.n_ratings == 0:
        raise RatingsValidationError(
            f"Split of {dataset.n_ratings} ratings at fraction {split_config.fraction} left no test ratings")
    users = list(split.test_users)
    n_chunks = min(len(users), workers * 4)
    chunks = [list(c) for c in np.array_split(np.asarray(users, dtype=np.int64), n_chunks) if len(c)]
    chunks = [[int(u) for u in c] for c in chunks]
    logger.info("Evaluating %s on %s: %d test users, %d test ratings",
                baseline, dataset_name, len(users), split.test.n_ratings)

    args = (baseline, sim_params, iwo_params, fitness_holdout_fraction, global_seed)
    if workers == 1:
        results = (_predict_chunk(split.train, split.test, c, *args) for c in chunks)
    else:
        results = Parallel(n_jobs=workers, return_as='generator')(
            delayed(_predict_chunk)(split.train, split.test, c, *args) for c in chunks)

    per_pair: List[PairPrediction] = []
    for chunk_pairs in tqdm(results, total=len(chunks), desc=baseline, disable=not show_progress):
        per_pair.extend(chunk_pairs)

    snapshot = {
        'baseline': baseline,
        'split_fraction': split_config.fraction,
        'split_seed': split_config.seed,
        'k': sim_params.k,
        'theta': sim_params.theta,
        's_min': iwo_params.s_min,
        's_max': iwo_params.s_max,
        'sigma_initial': iwo_params.sigma_initial,
        'sigma_final': iwo_params.sigma_final,
        'n': iwo_params.n,
        'T': iwo_params.T,
        'pop_initial': iwo_params.pop_initial,
        'pop_max': iwo_params.pop_max,
        'fitness_holdout_fraction': fitness_holdout_fraction,
        'global_seed': global_seed,
        'n_users': dataset.n_users,
        'n_items': dataset.n_items,
        'n_ratings': dataset.n_ratings,
    }
    report = EvaluationReport.from_pairs(
        dataset_name, baseline, per_pair, snapshot,
        elapsed=time.perf_counter() - started,
        sampled_users=sampled_users,
        reference_results=REFERENCE_RESULTS.get(dataset_format or '', {}),
    )
    logger.info("%s on %s: MAE=%.4f RMSE=%.4f coverage=%.3f Z=%d (%.1fs)",
                baseline, dataset_name, report.mae, report.rmse, report.coverage,
                report.z_predictions, report.elapsed)
    return report


def sweep_theta(dataset: RatingMatrix, thetas: Sequence[float], sim_params: SimilarityParams,
                iwo_params: IwoParams, split_config: SplitConfig, **kwargs) -> List[EvaluationReport]:
    """Run the proposed method for each threshold on the same split."""
    reports = []
    for theta in thetas:
        params = SimilarityParams(k=sim_params.k, theta=theta)
        reports.append(run_experiment(dataset, params, iwo_params, split_config, 'proposed', **kwargs))
    return reports


def sample_users(dataset: RatingMatrix, n: int, seed: int) -> RatingMatrix:
    """
    Restrict a matrix to n seeded-random users.

    Raises:
        ParameterError: If n is zero or exceeds the number of users.
    """
    if n <= 0:
        raise ParameterError(f"Sample size must be positive, got {n}")
    if n > dataset.n_users:
        raise ParameterError(f"Cannot sample {n} users from {dataset.n_users}")
    rng = seeded_rng(seed)
    chosen = rng.choice(np.asarray(dataset.user_ids, dtype=np.int64), size=n, replace=False)
    return dataset.subset(sorted(int(u) for u in chosen))


def write_report_json(report: EvaluationReport, path, include_elapsed: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(include_elapsed), indent=2) + "\n", encoding='utf-8')
    return path


def write_report_csv(report: EvaluationReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(report.per_pair, columns=list(PairPrediction._fields))
    frame.to_csv(path, index=False)
    return path


def render_table(reports: Sequence[EvaluationReport], console: Optional[Console] = None,
                 title: Optional[str] = None) -> None:
    """Print reports, and the published rows of their dataset, as an aligned table."""
    console = console or Console()
    table = Table(title=title)
    for column in ('Method', 'Theta', 'Z', 'MAE', 'RMSE', 'Coverage', 'Time (s)'):
        table.add_column(column, justify='left' if column == 'Method' else 'right')

    for report in reports:
        table.add_row(report.baseline, f"{report.config_snapshot.get('theta', float('nan')):.2f}",
                      str(report.z_predictions), f"{report.mae:.4f}", f"{report.rmse:.4f}",
                      f"{report.coverage:.3f}", f"{report.elapsed:.1f}")

    shown = set()
    for report in reports:
        for method, row in report.reference_results.items():
            if method in shown:
                continue
            shown.add(method)
            table.add_row(f"{method} ({REFERENCE_LABEL})", '-', '-',
                          f"{row['mae']:.3f}", f"{row['rmse']:.3f}", '-', '-')

    console.print(table)
    for report in reports:
        if report.sampled_users:
            console.print(f"{report.dataset}: subsample of {report.sampled_users} users")
