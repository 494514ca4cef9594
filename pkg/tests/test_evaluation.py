"""
Tests for experiment runs, error metrics and report output.

Experiments run on small constructed matrices with a shortened optimizer
schedule; the expected orderings follow from how the matrices are built.
"""

import io
import json
import math

import pandas as pd
import pytest
from rich.console import Console

from src.exceptions import ParameterError, RatingsValidationError, ReportIntegrityError
from src.evaluation import (
    REFERENCE_LABEL,
    REFERENCE_RESULTS,
    EvaluationReport,
    PairPrediction,
    mae,
    rmse,
    render_table,
    run_experiment,
    sample_users,
    sweep_theta,
    write_report_csv,
    write_report_json,
)
from src.ratings import SplitConfig


@pytest.fixture
def split_config():
    return SplitConfig(fraction=0.2, seed=42)


@pytest.fixture
def constant_matrix(build_matrix):
    """Every user gives all items the same rating."""
    return build_matrix({u: {i: float(1 + u % 5) for i in range(1, 11)} for u in range(1, 9)}, 1.0, 5.0)


def _pairs(values):
    return [PairPrediction(1, j, true, predicted, False) for j, (true, predicted) in enumerate(values)]


def test_metric_examples():
    """Test MAE and RMSE on hand-computed residuals"""
    assert mae([0.5, -0.5, 1.0]) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert rmse([0.5, -0.5, 1.0]) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert mae([0.0, 0.0]) == 0.0
    assert rmse([3.0, 4.0]) == pytest.approx(math.sqrt(12.5), abs=1e-12)


def test_metrics_reject_empty():
    with pytest.raises(ParameterError):
        mae([])
    with pytest.raises(ParameterError):
        rmse([])


def test_report_from_pairs():
    """Test that aggregates are derived from the per-pair records"""
    pairs = _pairs([(3.0, 3.5), (4.0, 3.0), (2.0, 2.0)])
    pairs[2] = pairs[2]._replace(used_fallback=True)
    report = EvaluationReport.from_pairs('toy', 'proposed', pairs, {'theta': 0.6})

    assert report.z_predictions == 3
    assert report.mae == pytest.approx(0.5, abs=1e-12)
    assert report.rmse == pytest.approx(math.sqrt(1.25 / 3), abs=1e-12)
    assert report.rmse >= report.mae
    assert report.coverage == pytest.approx(2.0 / 3.0)


def test_report_integrity_checks():
    """Test that inconsistent reports cannot be constructed"""
    pairs = _pairs([(3.0, 3.5), (4.0, 3.0)])
    good = EvaluationReport.from_pairs('toy', 'proposed', pairs, {})

    with pytest.raises(ReportIntegrityError):
        EvaluationReport('toy', 'proposed', 3, good.mae, good.rmse, 1.0, pairs, {})
    with pytest.raises(ReportIntegrityError):
        EvaluationReport('toy', 'proposed', 2, good.mae + 0.1, good.rmse, 1.0, pairs, {})
    with pytest.raises(ReportIntegrityError):
        EvaluationReport('toy', 'proposed', 2, good.mae, good.mae - 0.1, 1.0, pairs, {})
    with pytest.raises(ReportIntegrityError):
        EvaluationReport('toy', 'proposed', 2, good.mae, good.rmse, 1.5, pairs, {})


def test_user_mean_on_constant_users(constant_matrix, sim_params, small_params, split_config):
    """Test that constant raters are predicted exactly by their mean"""
    report = run_experiment(constant_matrix, sim_params, small_params, split_config, 'user-mean')

    assert report.mae == 0.0
    assert report.rmse == 0.0
    assert report.coverage == 1.0
    assert report.z_predictions == round(0.2 * constant_matrix.n_ratings)


def test_per_pair_order_and_contents(family_matrix, sim_params, small_params, split_config):
    """Test that pairs are ordered by (user, item) and hold the true test ratings"""
    report = run_experiment(family_matrix, sim_params, small_params, split_config, 'user-mean')
    keys = [(p.user, p.item) for p in report.per_pair]

    assert keys == sorted(keys)
    for p in report.per_pair:
        assert p.true == family_matrix.rating(p.user, p.item)
        assert family_matrix.scale_min <= p.predicted <= family_matrix.scale_max


def test_proposed_beats_baselines(family_matrix, sim_params, small_params, split_config):
    """Test that learned weights beat the user mean and unweighted averaging"""
    reports = {
        baseline: run_experiment(family_matrix, sim_params, small_params, split_config, baseline)
        for baseline in ('proposed', 'user-mean', 'pcc-topk-unweighted')
    }

    assert reports['proposed'].mae < reports['user-mean'].mae
    assert reports['proposed'].mae <= reports['pcc-topk-unweighted'].mae
    assert len({r.z_predictions for r in reports.values()}) == 1


def test_experiment_is_deterministic(family_matrix, sim_params, small_params, split_config):
    """Test that repeated runs serialize identically"""
    first = run_experiment(family_matrix, sim_params, small_params, split_config, global_seed=7)
    second = run_experiment(family_matrix, sim_params, small_params, split_config, global_seed=7)
    assert json.dumps(first.to_dict()) == json.dumps(second.to_dict())


def test_parallel_matches_serial(family_matrix, sim_params, small_params, split_config):
    """Test that worker processes do not change the results"""
    serial = run_experiment(family_matrix, sim_params, small_params, split_config, workers=1)
    parallel = run_experiment(family_matrix, sim_params, small_params, split_config, workers=2)
    assert serial.per_pair == parallel.per_pair
    assert serial.config_snapshot == parallel.config_snapshot


def test_experiment_argument_errors(family_matrix, sim_params, small_params, split_config):
    with pytest.raises(ParameterError):
        run_experiment(family_matrix, sim_params, small_params, split_config, 'random')
    with pytest.raises(ParameterError):
        run_experiment(family_matrix, sim_params, small_params, split_config, workers=0)


def test_experiment_rejects_empty_test_set(build_matrix, sim_params, small_params):
    """Test that a split with no test ratings is refused"""
    m = build_matrix({1: {1: 1.0, 2: 2.0}})
    with pytest.raises(RatingsValidationError):
        run_experiment(m, sim_params, small_params, SplitConfig(fraction=0.2, seed=0), 'user-mean')


def test_experiment_negative_seeds(family_matrix, sim_params, small_params):
    """Test that negative split and global seeds run and reproduce"""
    config = SplitConfig(fraction=0.2, seed=-1)
    first = run_experiment(family_matrix, sim_params, small_params, config, global_seed=-5)
    second = run_experiment(family_matrix, sim_params, small_params, config, global_seed=-5)
    assert first.to_dict() == second.to_dict()
    assert sample_users(family_matrix, 3, seed=-5).n_users == 3


def test_reference_rows_attached(constant_matrix, sim_params, small_params, split_config):
    """Test that published rows follow the dataset format and are labeled"""
    report = run_experiment(constant_matrix, sim_params, small_params, split_config, 'user-mean',
                            dataset_name='toy', dataset_format='filmtrust')
    data = report.to_dict()

    assert data['reference_results']['label'] == REFERENCE_LABEL
    assert data['reference_results']['rows'] == REFERENCE_RESULTS['filmtrust']
    assert REFERENCE_RESULTS['filmtrust']['IWO-weighted'] == {'mae': 0.545, 'rmse': 0.656}
    assert REFERENCE_RESULTS['epinions']['IWO-weighted'] == {'mae': 0.710, 'rmse': 0.961}

    plain = run_experiment(constant_matrix, sim_params, small_params, split_config, 'user-mean')
    assert plain.to_dict()['reference_results'] == {}


def test_to_dict_elapsed_is_optional(constant_matrix, sim_params, small_params, split_config):
    report = run_experiment(constant_matrix, sim_params, small_params, split_config, 'user-mean')
    assert 'elapsed' not in report.to_dict()
    assert report.to_dict(include_elapsed=True)['elapsed'] >= 0.0


def test_sweep_theta(family_matrix, sim_params, small_params, split_config):
    """Test one report per threshold, each recording its threshold"""
    reports = sweep_theta(family_matrix, [0.3, 0.9], sim_params, small_params, split_config)

    assert [r.config_snapshot['theta'] for r in reports] == [0.3, 0.9]
    assert all(r.baseline == 'proposed' for r in reports)


def test_sample_users(family_matrix):
    """Test sample sizes, determinism and the bounds"""
    sample = sample_users(family_matrix, 3, seed=1)
    assert sample.n_users == 3
    assert sample.user_ids == sample_users(family_matrix, 3, seed=1).user_ids
    for u in sample.user_ids:
        assert sample.profile(u) == family_matrix.profile(u)

    assert sample_users(family_matrix, family_matrix.n_users, seed=1).user_ids == family_matrix.user_ids
    with pytest.raises(ParameterError):
        sample_users(family_matrix, 0, seed=1)
    with pytest.raises(ParameterError):
        sample_users(family_matrix, family_matrix.n_users + 1, seed=1)


def test_write_reports(constant_matrix, sim_params, small_params, split_config, tmp_path):
    """Test the JSON keys and the per-pair CSV layout"""
    report = run_experiment(constant_matrix, sim_params, small_params, split_config, 'user-mean',
                            dataset_name='toy')
    json_path = write_report_json(report, tmp_path / 'out' / 'toy.json')
    csv_path = write_report_csv(report, tmp_path / 'out' / 'toy.csv')

    data = json.loads(json_path.read_text(encoding='utf-8'))
    assert data['dataset'] == 'toy'
    assert data['z_predictions'] == len(data['per_pair']) == report.z_predictions
    assert data['mae'] == report.mae
    assert data['config_snapshot']['theta'] == 0.6

    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ['user', 'item', 'true', 'predicted', 'used_fallback']
    assert len(frame) == report.z_predictions


def test_render_table(constant_matrix, sim_params, small_params, split_config):
    """Test that the table lists the run and the labeled published rows"""
    report = run_experiment(constant_matrix, sim_params, small_params, split_config, 'user-mean',
                            dataset_name='toy', dataset_format='epinions')
    buffer = io.StringIO()
    render_table([report], console=Console(file=buffer, width=200), title='toy')

    text = buffer.getvalue()
    assert 'user-mean' in text
    assert REFERENCE_LABEL in text
    assert 'TCFACO' in text
