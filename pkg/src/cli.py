"""
Command-line interface: validate, evaluate, predict, trace and sweep
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from src import __version__
from src.config import BASELINE_CHOICES, RunConfig, load_run_config
from src.evaluation import (
    BASELINES,
    EvaluationReport,
    render_table,
    run_experiment,
    sample_users,
    sweep_theta,
    write_report_csv,
    write_report_json,
)
from src.exceptions import (
    ModelCacheError,
    ParameterError,
    RatingsParseError,
    RatingsValidationError,
    UnknownUserError,
)
from src.iwo import write_trace_csv
from src.predictor import fit_user_weights, load_models, predict_for, save_models, user_seed
from src.ratings import SCALES, RatingMatrix, parse_ratings_file
from src.similarity import write_neighbor_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA_REFERENCE = 2
EXIT_INTERRUPTED = 130

# (flag, dest, type, help)
_CONFIG_FLAGS = [
    ('--dataset', 'dataset_path', str, "ratings file of `user item rating` lines"),
    ('--format', 'dataset_format', str, f"dataset format: {', '.join(sorted(SCALES))}"),
    ('--split-fraction', 'split_fraction', float, "share of ratings held out for testing"),
    ('--split-seed', 'split_seed', int, "seed of the train/test split"),
    ('--k', 'k', float, "confidence scale used when the Pearson similarity is zero"),
    ('--theta', 'theta', float, "important-user threshold"),
    ('--s-min', 's_min', int, "fewest seeds per weed"),
    ('--s-max', 's_max', int, "most seeds per weed"),
    ('--sigma-initial', 'sigma_initial', float, "initial dispersal deviation"),
    ('--sigma-final', 'sigma_final', float, "final dispersal deviation"),
    ('--n', 'n', float, "nonlinear modulation index"),
    ('--T', 'T', int, "optimizer iterations"),
    ('--pop-initial', 'pop_initial', int, "initial weed population"),
    ('--pop-max', 'pop_max', int, "maximum weed population"),
    ('--fitness-holdout-fraction', 'fitness_holdout_fraction', float,
     "share of each user's train items used to score weights"),
    ('--sample-users', 'sample_users', int, "evaluate on a seeded subsample of users"),
    ('--baseline', 'baseline', str, f"method: {', '.join(BASELINE_CHOICES)}"),
    ('--output-dir', 'output_dir', str, "directory for JSON/CSV reports"),
    ('--model-cache', 'model_cache', str, "file of fitted user models"),
    ('--global-seed', 'global_seed', int, "seed per-user fitting seeds derive from"),
    ('--workers', 'workers', int, "worker processes (default: available CPUs)"),
    ('--log-level', 'log_level', str, "logging level"),
]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', dest='config_path', default=None, help="flat key=value config file")
    for flag, dest, kind, text in _CONFIG_FLAGS:
        common.add_argument(flag, dest=dest, type=kind, default=None, help=text)
    common.add_argument('--record-timing', dest='record_timing', action='store_true', default=None,
                        help="include elapsed time in JSON reports")

    parser = argparse.ArgumentParser(
        prog='iwo-cf',
        description="Collaborative filtering with IWO-learned neighbor weights")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('validate', parents=[common], help="check a ratings file and the configuration")
    commands.add_parser('evaluate', parents=[common], help="run the train/test experiment")

    predict = commands.add_parser('predict', parents=[common], help="predict one rating")
    predict.add_argument('--user', type=int, required=True)
    predict.add_argument('--item', type=int, required=True)

    trace = commands.add_parser('trace', parents=[common], help="dump the optimizer trace for one user")
    trace.add_argument('--user', type=int, required=True)
    trace.add_argument('--output', default=None, help="trace CSV path (default: standard output)")
    trace.add_argument('--neighbors', default=None, help="also write the user's neighbor CSV here")

    sweep = commands.add_parser('sweep', parents=[common], help="evaluate several important-user thresholds")
    sweep.add_argument('--thetas', default='0.3,0.4,0.5,0.6,0.7',
                       help="comma-separated thresholds")
    return parser


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )


def _load_dataset(config: RunConfig) -> Tuple[RatingMatrix, Optional[int]]:
    if not config.dataset_path:
        raise ParameterError("No dataset configured; pass --dataset or set dataset_path")
    matrix = parse_ratings_file(config.dataset_path, config.dataset_format)
    if config.sample_users is not None:
        matrix = sample_users(matrix, config.sample_users, config.global_seed)
        logger.info("Sampled %d users (%d ratings)", matrix.n_users, matrix.n_ratings)
        return matrix, config.sample_users
    return matrix, None


def _require_user(matrix: RatingMatrix, user: int) -> None:
    if not matrix.has_user(user):
        raise UnknownUserError(user)


def cmd_validate(config: RunConfig) -> int:
    """Check the dataset file against its format and the matrix invariants."""
    if not config.dataset_path:
        print("error: no dataset configured")
        return EXIT_CONFIG
    try:
        matrix = parse_ratings_file(config.dataset_path, config.dataset_format)
    except FileNotFoundError:
        print(f"error: file not found: {config.dataset_path}")
        return EXIT_CONFIG
    except (RatingsParseError, RatingsValidationError) as e:
        print(f"error: {e}")
        return EXIT_CONFIG

    summary = matrix.summary()
    print(f"{summary['n_users']} users, {summary['n_items']} items, {summary['n_ratings']} ratings "
          f"(density {summary['density']:.4%}, scale [{summary['scale_min']}, {summary['scale_max']}])")
    problems = matrix.check_invariants()
    for problem in problems:
        print(f"error: {problem}")
    return EXIT_CONFIG if problems else EXIT_OK


def _write_outputs(config: RunConfig, report: EvaluationReport, stem: str) -> None:
    out = Path(config.output_dir)
    json_path = write_report_json(report, out / f"{stem}.json", include_elapsed=config.record_timing)
    csv_path = write_report_csv(report, out / f"{stem}.csv")
    logger.info("Wrote %s and %s", json_path, csv_path)


def _experiment_kwargs(config: RunConfig, sampled: Optional[int]) -> dict:
    return dict(
        dataset_name=config.dataset_name,
        dataset_format=config.dataset_format,
        fitness_holdout_fraction=config.fitness_holdout_fraction,
        global_seed=config.global_seed,
        workers=config.workers,
        sampled_users=sampled,
        show_progress=sys.stderr.isatty(),
    )


def cmd_evaluate(config: RunConfig) -> int:
    """Run the configured method(s) on one split and write all report formats."""
    matrix, sampled = _load_dataset(config)
    baselines = BASELINES if config.baseline == 'all' else (config.baseline,)

    reports = []
    for baseline in baselines:
        report = run_experiment(matrix, config.sim_params(), config.iwo_params(), config.split_config(),
                                baseline, **_experiment_kwargs(config, sampled))
        _write_outputs(config, report, f"{config.dataset_name}_{baseline}")
        reports.append(report)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / 'effective_config.txt').write_text(config.to_text(), encoding='utf-8')
    render_table(reports, title=config.dataset_name)
    return EXIT_OK


def cmd_sweep(config: RunConfig, thetas: Sequence[float]) -> int:
    """Evaluate the proposed method for each threshold on the same split."""
    matrix, sampled = _load_dataset(config)
    reports = sweep_theta(matrix, thetas, config.sim_params(), config.iwo_params(), config.split_config(),
                          **_experiment_kwargs(config, sampled))
    for report in reports:
        _write_outputs(config, report, f"{config.dataset_name}_sweep_theta{report.config_snapshot['theta']:.2f}")
    render_table(reports, title=f"{config.dataset_name}: threshold sweep")
    return EXIT_OK


def cmd_predict(config: RunConfig, user: int, item: int) -> int:
    """Predict one rating, using the model cache when it holds the user."""
    matrix, _ = _load_dataset(config)
    _require_user(matrix, user)

    models = {}
    cache = Path(config.model_cache) if config.model_cache else None
    if cache is not None and cache.is_file():
        models = load_models(cache, matrix, config.sim_params())

    model = models.get(user)
    if model is None and len(matrix.profile(user)) >= 2:
        model = fit_user_weights(matrix, user, config.sim_params(), config.iwo_params(),
                                 user_seed(config.global_seed, user), config.fitness_holdout_fraction)
        if cache is not None:
            models[user] = model
            save_models(models.values(), cache)
            logger.info("Cached model of user %d in %s", user, cache)

    prediction = predict_for(matrix, model, user, item)
    print(f"user={user} item={item} rating={prediction.value:.4f} "
          f"fallback={'true' if prediction.used_fallback else 'false'} tier={prediction.tier}")
    return EXIT_OK


def cmd_trace(config: RunConfig, user: int, output: Optional[str], neighbors: Optional[str]) -> int:
    """Fit one user and dump the optimizer convergence trace."""
    matrix, _ = _load_dataset(config)
    _require_user(matrix, user)
    if len(matrix.profile(user)) < 2:
        print(f"error: user {user} needs at least 2 ratings to fit weights")
        return EXIT_CONFIG

    model, trace = fit_user_weights(matrix, user, config.sim_params(), config.iwo_params(),
                                    user_seed(config.global_seed, user), config.fitness_holdout_fraction,
                                    return_trace=True)
    if neighbors:
        write_neighbor_csv(model.neighbor_set, neighbors)
    if trace is None:
        print(f"user {user} has no important users at theta={config.theta}; nothing to trace")
        return EXIT_OK
    write_trace_csv(trace, output if output else sys.stdout)
    return EXIT_OK


def _parse_thetas(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(',') if t.strip()]
    except ValueError:
        raise ParameterError(f"Invalid threshold list {text!r}") from None


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main program execution"""
    args = build_parser().parse_args(argv)
    overrides = {dest: getattr(args, dest) for _, dest, _, _ in _CONFIG_FLAGS}
    overrides['record_timing'] = args.record_timing

    try:
        config = load_run_config(args.config_path, overrides)
        _configure_logging(config.log_level)

        if args.command == 'validate':
            return cmd_validate(config)
        if args.command == 'evaluate':
            return cmd_evaluate(config)
        if args.command == 'predict':
            return cmd_predict(config, args.user, args.item)
        if args.command == 'trace':
            return cmd_trace(config, args.user, args.output, args.neighbors)
        return cmd_sweep(config, _parse_thetas(args.thetas))

    except UnknownUserError as e:
        print(f"error: {e}")
        return EXIT_DATA_REFERENCE
    except FileNotFoundError as e:
        print(f"error: {e}")
        return EXIT_CONFIG
    except (ParameterError, RatingsParseError, RatingsValidationError, ModelCacheError) as e:
        print(f"error: {e}")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("\n\nOperation cancelled by user.")
        return EXIT_INTERRUPTED
