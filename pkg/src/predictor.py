"""
Module for fitting neighbor importance weights and predicting ratings
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np

from src.exceptions import ModelCacheError, ParameterError, RatingsValidationError
from src.iwo import IwoParams, IwoTrace, optimize
from src.ratings import RatingMatrix, user_mean
from src.seeding import normalize_seed, seeded_rng
from src.similarity import Neighbor, NeighborSet, SimilarityParams, pair_weight, select_important_users

logger = logging.getLogger(__name__)

DEFAULT_HOLDOUT_FRACTION = 0.25


@dataclass(frozen=True)
class FitnessItemSet:
    """Train items of a target held back to score candidate weight vectors."""
    target: int
    items: FrozenSet[int]
    ratings: Mapping[int, float]


@dataclass(eq=False)
class UserModel:
    """
    Fitted importance weights of a target user's neighbors.

    Attributes:
        target: The user the model predicts for.
        neighbor_set: Important users, in weight-vector order.
        weights: One weight in [0, 1] per neighbor.
        fitness_achieved: MAE on the fitness items with these weights.
        fallback_only: True when the user has no important users.
    """
    target: int
    neighbor_set: NeighborSet
    weights: np.ndarray
    fitness_achieved: float
    fallback_only: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.neighbor_set),):
            raise ParameterError(
                f"{self.weights.size} weights for {len(self.neighbor_set)} neighbors of user {self.target}")
        if self.weights.size and (self.weights.min() < 0.0 or self.weights.max() > 1.0):
            raise ParameterError(f"Weights of user {self.target} must lie in [0, 1]")


class Prediction(NamedTuple):
    value: float
    used_fallback: bool
    tier: str


def user_seed(global_seed: int, user: int) -> int:
    """Derive a per-user seed that does not depend on scheduling order."""
    sequence = np.random.SeedSequence([normalize_seed(global_seed), normalize_seed(user)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def predict_rating(train: RatingMatrix, model: UserModel, item: int) -> Optional[float]:
    """
    Weighted average of the ratings neighbors gave the item.

    Only neighbors who rated the item take part. Returns None when none of
    them did or their weights sum to zero.

    Raises:
        ParameterError: If weights and neighbors are misaligned.
    """
    if len(model.weights) != len(model.neighbor_set):
        raise ParameterError(
            f"{len(model.weights)} weights for {len(model.neighbor_set)} neighbors of user {model.target}")
    raters = train.item_index.get(item)
    if not raters:
        return None

    numerator = 0.0
    denominator = 0.0
    for neighbor, weight in zip(model.neighbor_set, model.weights):
        if neighbor.user in raters:
            numerator += weight * train.ratings[neighbor.user][item]
            denominator += weight
    if denominator <= 0.0:
        return None
    return train.clamp(numerator / denominator)


def _fallback(train: RatingMatrix, u: int, i: int) -> Tuple[float, str]:
    if train.n_users == 0:
        raise RatingsValidationError("Cannot fall back on an empty rating matrix")
    if train.has_user(u):
        return train.clamp(user_mean(train, u)), 'user-mean'
    mean = train.item_mean(i)
    if mean is not None:
        return train.clamp(mean), 'item-mean'
    return train.clamp(train.global_mean()), 'global-mean'


def fallback_prediction(train: RatingMatrix, u: int, i: int) -> float:
    """User mean, else item mean, else global mean; clamped to the scale."""
    return _fallback(train, u, i)[0]


def predict_for(train: RatingMatrix, model: Optional[UserModel], user: int, item: int) -> Prediction:
    """Predict with the model when possible, falling back otherwise."""
    if model is not None and not model.fallback_only:
        value = predict_rating(train, model, item)
        if value is not None:
            return Prediction(value, False, 'neighbors')
    value, tier = _fallback(train, user, item)
    return Prediction(value, True, tier)


def build_fitness_set(train: RatingMatrix, u: int, holdout_fraction: float, seed: int) -> FitnessItemSet:
    """
    Pick a seeded subset of a user's train items to score weights on.

    At least one item is held out and at least one is left for fitting.

    Raises:
        ParameterError: If the user has fewer than two ratings or the fraction is not in (0, 1).
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ParameterError(f"Holdout fraction must lie in (0, 1), got {holdout_fraction}")
    profile = train.profile(u)
    if len(profile) < 2:
        raise ParameterError(f"User {u} needs at least 2 train ratings, has {len(profile)}")

    size = min(len(profile) - 1, max(1, int(math.floor(len(profile) * holdout_fraction))))
    items = sorted(profile)
    rng = seeded_rng(seed)
    chosen = sorted(items[j] for j in rng.choice(len(items), size=size, replace=False))
    return FitnessItemSet(target=u, items=frozenset(chosen), ratings={i: profile[i] for i in chosen})


class FitnessObjective:
    """
    Batched MAE of a weight vector on a fitness item set.

    Neighbor ratings on the fitness items are laid out as a dense
    (items x neighbors) array so a whole population is scored with two
    matrix products.
    """

    def __init__(self, train: RatingMatrix, neighbor_set: NeighborSet, fitness_set: FitnessItemSet):
        if not fitness_set.items:
            raise ParameterError(f"Fitness item set of user {fitness_set.target} is empty")
        items = sorted(fitness_set.items)
        self.truth = np.array([fitness_set.ratings[i] for i in items])
        self.fallback = np.array([fallback_prediction(train, fitness_set.target, i) for i in items])
        self.mask = np.zeros((len(items), len(neighbor_set)))
        self.values = np.zeros_like(self.mask)
        for col, neighbor in enumerate(neighbor_set):
            profile = train.ratings[neighbor.user]
            for row, item in enumerate(items):
                if item in profile:
                    self.mask[row, col] = 1.0
                    self.values[row, col] = profile[item]
        self.scale = (train.scale_min, train.scale_max)

    def batch(self, weights: np.ndarray) -> np.ndarray:
        weights = np.atleast_2d(weights)
        numerator = weights @ self.values.T
        denominator = weights @ self.mask.T
        covered = denominator > 0.0
        predicted = np.where(covered, numerator / np.where(covered, denominator, 1.0), self.fallback)
        predicted = np.clip(predicted, *self.scale)
        return np.abs(predicted - self.truth).mean(axis=1)

    def __call__(self, weights: np.ndarray) -> float:
        return float(self.batch(weights)[0])


def fitness_mae(train: RatingMatrix, neighbor_set: NeighborSet, weights, fitness_set: FitnessItemSet) -> float:
    """
    MAE of the weighted predictions on the fitness items.

    Items no neighbor can predict are scored with the fallback prediction.

    Raises:
        ParameterError: If the fitness set is empty or weights are misaligned.
    """
    if not fitness_set.items:
        raise ParameterError(f"Fitness item set of user {fitness_set.target} is empty")
    model = UserModel(fitness_set.target, neighbor_set, weights, float('nan'))
    errors = []
    for item in sorted(fitness_set.items):
        predicted = predict_for(train, model, fitness_set.target, item).value
        errors.append(abs(predicted - fitness_set.ratings[item]))
    return math.fsum(errors) / len(errors)


def fit_user_weights(train: RatingMatrix, u: int, sim_params: SimilarityParams, iwo_params: IwoParams,
                     seed: int, holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION,
                     return_trace: bool = False) -> Union[UserModel, Tuple[UserModel, Optional[IwoTrace]]]:
    """
    Fit importance weights for one user's important neighbors.

    The fitness items are masked out of the user's profile before the
    neighbors are selected, and the optimizer starts from the all-ones
    vector plus random weeds so it never returns worse than plain averaging.

    Args:
        train: Training ratings.
        u: Target user with at least two train ratings.
        sim_params: Similarity filter parameters.
        iwo_params: Optimizer parameters.
        seed: Seed for the fitness item draw and the optimizer.
        holdout_fraction: Share of the user's train items used as fitness items.
        return_trace: Also return the optimizer trace (None for fallback-only models).

    Returns:
        UserModel, or (UserModel, IwoTrace | None) when return_trace is set.
    """
    fitness_seed, optimizer_seed = (
        int(child.generate_state(1, dtype=np.uint64)[0])
        for child in np.random.SeedSequence(normalize_seed(seed)).spawn(2)
    )
    fitness_set = build_fitness_set(train, u, holdout_fraction, fitness_seed)
    masked = train.without(u, fitness_set.items)
    neighbor_set = select_important_users(masked, u, sim_params)

    trace = None
    if not neighbor_set:
        achieved = fitness_mae(masked, neighbor_set, np.empty(0), fitness_set)
        model = UserModel(u, neighbor_set, np.empty(0), achieved, fallback_only=True)
        logger.debug("User %d has no important users; fallback only", u)
    else:
        objective = FitnessObjective(masked, neighbor_set, fitness_set)
        dim = len(neighbor_set)
        best, trace = optimize(objective.batch, dim, iwo_params, optimizer_seed,
                               initial_positions=[np.ones(dim)], vectorized=True)
        model = UserModel(u, neighbor_set, best.position, best.fitness)
        logger.debug("User %d: %d neighbors, fitness %.4f after %d evaluations",
                     u, dim, best.fitness, trace.evaluations)

    if return_trace:
        return model, trace
    return model


def save_models(models: Iterable[UserModel], path) -> None:
    """Write models as lines `user, neighbor:weight, ..., fitness`."""
    lines = ["# user, neighbor:weight, ..., fitness"]
    for model in sorted(models, key=lambda m: m.target):
        fields = [str(model.target)]
        fields += [f"{n.user}:{w!r}" for n, w in zip(model.neighbor_set, model.weights.tolist())]
        fields.append(repr(float(model.fitness_achieved)))
        lines.append(", ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding='utf-8')


def _parse_model_line(line: str, line_number: int) -> Tuple[int, List[Tuple[int, float]], float]:
    fields = [f.strip() for f in line.split(',')]
    if len(fields) < 2:
        raise ModelCacheError(f"Model record needs a user and a fitness at line {line_number}")
    try:
        user = int(fields[0])
        fitness = float(fields[-1])
        pairs = []
        for entry in fields[1:-1]:
            neighbor, weight = entry.split(':')
            pairs.append((int(neighbor), float(weight)))
    except ValueError:
        raise ModelCacheError(f"Malformed model record at line {line_number}") from None
    return user, pairs, fitness


def load_models(path, train: RatingMatrix, sim_params: SimilarityParams) -> Dict[int, UserModel]:
    """
    Read cached models back.

    The per-neighbor sim/conf/W values are recomputed from `train`.

    Raises:
        ModelCacheError: On malformed records or users missing from train.
    """
    models: Dict[int, UserModel] = {}
    text = Path(path).read_text(encoding='utf-8')
    for line_number, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith('#'):
            continue
        user, pairs, fitness = _parse_model_line(line, line_number)
        if not train.has_user(user):
            raise ModelCacheError(f"Cached model of user {user} at line {line_number}: user missing from the data")
        neighbors = []
        for neighbor, _ in pairs:
            if not train.has_user(neighbor):
                raise ModelCacheError(f"Cached model of user {user} references missing neighbor {neighbor}")
            neighbors.append(Neighbor(neighbor, *pair_weight(train, user, neighbor, sim_params)))
        neighbor_set = NeighborSet(target=user, neighbors=tuple(neighbors), theta_used=sim_params.theta)
        try:
            models[user] = UserModel(user, neighbor_set, [w for _, w in pairs], fitness,
                                     fallback_only=not pairs)
        except ParameterError as e:
            raise ModelCacheError(f"Invalid model record at line {line_number}: {e}") from None
    return models
