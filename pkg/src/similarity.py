"""
Module for confidence-fused user similarity and important-user selection
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np
import pandas as pd

from src.exceptions import ParameterError, UnknownUserError
from src.ratings import RatingMatrix, common_items

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimilarityParams:
    """
    Parameters of the similarity filter.

    Attributes:
        k: Scale applied to confidence when the Pearson similarity is zero.
        theta: Users whose combined weight exceeds theta are kept.
    """
    k: float = 0.2
    theta: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.k < 1.0:
            raise ParameterError(f"k must lie in (0, 1), got {self.k}")
        if not 0.0 <= self.theta < 1.0:
            raise ParameterError(f"theta must lie in [0, 1), got {self.theta}")


class Neighbor(NamedTuple):
    user: int
    sim: float
    conf: float
    weight_w: float


@dataclass(frozen=True)
class NeighborSet:
    """Important users of a target, ordered by descending weight then ascending id."""
    target: int
    neighbors: Tuple[Neighbor, ...]
    theta_used: float

    def __len__(self) -> int:
        return len(self.neighbors)

    def __iter__(self) -> Iterator[Neighbor]:
        return iter(self.neighbors)

    @property
    def ids(self) -> List[int]:
        return [n.user for n in self.neighbors]


def _pearson(pu: Mapping[int, float], pv: Mapping[int, float], items: Sequence[int]) -> float:
    if len(items) < 2:
        return 0.0
    a = np.fromiter((pu[i] for i in items), dtype=float, count=len(items))
    b = np.fromiter((pv[i] for i in items), dtype=float, count=len(items))
    # constancy is tested on the raw ratings
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        return 0.0
    da = a - a.mean()
    db = b - b.mean()
    p = float(np.dot(da, db) / (np.sqrt(np.dot(da, da)) * np.sqrt(np.dot(db, db))))
    return min(max(p, 0.0), 1.0)


def pearson_sim(train: RatingMatrix, u: int, v: int) -> float:
    """
    Pearson correlation of two users over their co-rated items, clamped to [0, 1].

    Means are taken over the co-rated items. Fewer than two co-rated items or
    a constant rating vector on them gives 0.

    Raises:
        UnknownUserError: If either user is not in train.
        ParameterError: If u == v.
    """
    if u == v:
        raise ParameterError(f"Self-similarity is undefined (user {u})")
    pu = train.profile(u)
    pv = train.profile(v)
    return _pearson(pu, pv, sorted(common_items(train, u, v)))


def confidence_from_counts(n_common: int, n_rated: int) -> float:
    return (n_common + 1) / (n_rated + 2)


def confidence(train: RatingMatrix, u: int, v: int) -> float:
    """
    Smoothed share of u's items that v also rated: (|A_uv| + 1) / (|I_u| + 2).

    Not symmetric in u and v.
    """
    if not train.has_user(v):
        raise UnknownUserError(v)
    return confidence_from_counts(len(common_items(train, u, v)), len(train.profile(u)))


def combined_weight(sim: float, conf: float, params: SimilarityParams) -> float:
    """
    Fuse similarity and confidence into W.

    Harmonic mean when both are non-zero, k * conf when only the similarity
    is zero, and 0 otherwise.

    Raises:
        ParameterError: If sim or conf lies outside [0, 1].
    """
    if not 0.0 <= sim <= 1.0:
        raise ParameterError(f"sim must lie in [0, 1], got {sim}")
    if not 0.0 <= conf <= 1.0:
        raise ParameterError(f"conf must lie in [0, 1], got {conf}")
    if conf == 0.0:
        if sim != 0.0:
            # confidence is strictly positive, so this should never happen
            logger.warning("Non-zero similarity %.6f with zero confidence; weight set to 0", sim)
        return 0.0
    if sim == 0.0:
        return params.k * conf
    return 2.0 * sim * conf / (sim + conf)


def pair_weight(train: RatingMatrix, u: int, v: int, params: SimilarityParams) -> Tuple[float, float, float]:
    """Return (sim, conf, W) for the ordered pair (u, v)."""
    sim = pearson_sim(train, u, v)
    conf = confidence(train, u, v)
    return sim, conf, combined_weight(sim, conf, params)


def select_important_users(train: RatingMatrix, u: int, params: SimilarityParams) -> NeighborSet:
    """
    Select every other user whose combined weight W exceeds theta.

    Args:
        train: Ratings used for the similarity computation.
        u: The target user.
        params: k and theta.

    Returns:
        NeighborSet: Possibly empty, ordered by descending W then ascending id.

    Raises:
        UnknownUserError: If u is not in train.
    """
    pu = train.profile(u)
    n_rated = len(pu)

    overlap: Counter = Counter()
    for item in pu:
        overlap.update(train.item_index[item])
    overlap.pop(u, None)

    chosen = []
    for v in train.user_ids:
        if v == u:
            continue
        n_common = overlap.get(v, 0)
        if n_common >= 2:
            pv = train.ratings[v]
            sim = _pearson(pu, pv, sorted(i for i in pu if i in pv))
        else:
            sim = 0.0
        conf = confidence_from_counts(n_common, n_rated)
        w = combined_weight(sim, conf, params)
        if w > params.theta:
            chosen.append(Neighbor(v, sim, conf, w))

    chosen.sort(key=lambda n: (-n.weight_w, n.user))
    logger.debug("User %d: %d important users at theta=%.3f", u, len(chosen), params.theta)
    return NeighborSet(target=u, neighbors=tuple(chosen), theta_used=params.theta)


def write_neighbor_csv(neighbor_set: NeighborSet, path) -> None:
    """Dump a neighbor set as CSV `neighbor,sim,conf,weight_w`."""
    frame = pd.DataFrame(
        [(n.user, n.sim, n.conf, n.weight_w) for n in neighbor_set],
        columns=['neighbor', 'sim', 'conf', 'weight_w'],
    )
    frame.to_csv(path, index=False)
