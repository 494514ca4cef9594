"""
Global pytest configuration and fixtures
"""
import os
import pytest
import numpy as np
from pathlib import Path

from src.iwo import IwoParams
from src.ratings import RatingMatrix
from src.similarity import SimilarityParams

# Base pattern shared by the constructed-oracle users
ORACLE_PATTERN = [1, 2, 3, 2, 1, 3, 3, 1, 2, 2, 1, 3, 2, 3, 1, 1, 2, 3, 3, 1]
ORACLE_SHIFT = 2


@pytest.fixture(scope="session", autouse=True)
def setup_test_results():
    """Ensure test results directory exists before running tests."""
    root_dir = Path(__file__).parent.parent
    results_dir = root_dir / 'test_results'
    results_dir.mkdir(exist_ok=True)
    (results_dir / 'coverage').mkdir(exist_ok=True)
    return results_dir


@pytest.fixture(autouse=True)
def setup_test_env():
    """Keep .env files and seed overrides out of the tests."""
    keys = ['TEST_MODE', 'IWO_CF_GLOBAL_SEED']
    original_env = {key: os.environ[key] for key in keys if key in os.environ}

    os.environ['TEST_MODE'] = '1'
    os.environ.pop('IWO_CF_GLOBAL_SEED', None)

    yield

    for key in keys:
        if key in original_env:
            os.environ[key] = original_env[key]
        else:
            os.environ.pop(key, None)


def make_matrix(profiles, scale_min=None, scale_max=None):
    """Build a RatingMatrix from {user: {item: rating}}."""
    triples = [(u, i, r) for u, p in profiles.items() for i, r in p.items()]
    return RatingMatrix.from_triples(triples, scale_min, scale_max)


def random_matrix(rng, n_users, n_items, density=0.6, levels=(1, 2, 3, 4, 5)):
    """Random small matrix; every user keeps at least one rating."""
    profiles = {}
    for u in range(1, n_users + 1):
        profile = {i: float(rng.choice(levels)) for i in range(1, n_items + 1) if rng.random() < density}
        if not profile:
            profile = {int(rng.integers(1, n_items + 1)): float(rng.choice(levels))}
        profiles[u] = profile
    return make_matrix(profiles, min(levels), max(levels))


def oracle_profiles(n_twins=1, n_shifted=3):
    """
    Target user 1 plus exact copies and shifted copies of its ratings.

    Shifted users correlate perfectly with the target but predict every
    rating ORACLE_SHIFT too high, so only exact copies should get weight.
    """
    base = {i + 1: float(r) for i, r in enumerate(ORACLE_PATTERN)}
    profiles = {1: dict(base)}
    user = 2
    for _ in range(n_twins):
        profiles[user] = dict(base)
        user += 1
    for _ in range(n_shifted):
        profiles[user] = {i: r + ORACLE_SHIFT for i, r in base.items()}
        user += 1
    return profiles


@pytest.fixture
def small_params():
    """Optimizer settings small enough for unit tests."""
    return IwoParams(s_min=0, s_max=7, sigma_initial=1.0, sigma_final=0.001, n=5, T=60,
                     pop_initial=10, pop_max=50)


@pytest.fixture
def sim_params():
    return SimilarityParams(k=0.2, theta=0.6)


@pytest.fixture
def oracle_matrix():
    """One exact neighbor and three shifted neighbors of user 1."""
    return make_matrix(oracle_profiles(n_twins=1, n_shifted=3), 1.0, 5.0)


@pytest.fixture
def family_matrix():
    """Three users on a base pattern and three on the shifted pattern; everyone has exact twins."""
    base = {i + 1: float(r) for i, r in enumerate(ORACLE_PATTERN)}
    profiles = {}
    for u in (1, 2, 3):
        profiles[u] = dict(base)
    for u in (4, 5, 6):
        profiles[u] = {i: r + ORACLE_SHIFT for i, r in base.items()}
    return make_matrix(profiles, 1.0, 5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ratings_file(tmp_path):
    """Write rating lines to a temporary file and return its path."""
    def _write(lines, name='ratings.txt'):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding='utf-8')
        return path
    return _write


@pytest.fixture
def build_matrix():
    """Factory for matrices given as {user: {item: rating}}."""
    return make_matrix


@pytest.fixture
def build_random_matrix():
    """Factory for random small matrices."""
    return random_matrix
