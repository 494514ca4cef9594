"""
Module for loading, indexing and splitting sparse user-item ratings
"""

import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

from src.exceptions import (
    ParameterError,
    RatingsParseError,
    RatingsValidationError,
    UnknownUserError,
)
from src.seeding import seeded_rng

logger = logging.getLogger(__name__)

# Declared rating scales; None means infer from the data
SCALES: Dict[str, Optional[Tuple[float, float]]] = {
    'filmtrust': (0.5, 4.0),
    'epinions': (1.0, 5.0),
    'generic': None,
}

_SEPARATOR = re.compile(r'[\s,]+')

Triple = Tuple[int, int, float]


@dataclass(frozen=True)
class RatingMatrix:
    """
    Immutable sparse user -> item -> rating store.

    Attributes:
        ratings: user id -> (item id -> rating)
        item_index: item id -> ids of the users who rated it (exact transpose)
        scale_min: lowest admissible rating
        scale_max: highest admissible rating
    """
    ratings: Mapping[int, Mapping[int, float]]
    item_index: Mapping[int, FrozenSet[int]]
    scale_min: float
    scale_max: float

    @classmethod
    def from_triples(cls, triples: Iterable[Triple],
                     scale_min: Optional[float] = None,
                     scale_max: Optional[float] = None) -> 'RatingMatrix':
        """
        Build a matrix from (user, item, rating) triples.

        Later triples for the same (user, item) pair replace earlier ones.
        Bounds not given are inferred from the observed ratings.

        Raises:
            RatingsValidationError: If there are no triples or a rating is off-scale.
        """
        ratings: Dict[int, Dict[int, float]] = {}
        for user, item, rating in triples:
            ratings.setdefault(int(user), {})[int(item)] = float(rating)

        if not ratings:
            raise RatingsValidationError("No ratings found")

        values = [r for profile in ratings.values() for r in profile.values()]
        low = min(values) if scale_min is None else float(scale_min)
        high = max(values) if scale_max is None else float(scale_max)
        if low > high:
            raise RatingsValidationError(f"Invalid rating scale [{low}, {high}]")

        for user, profile in ratings.items():
            for item, rating in profile.items():
                if not low <= rating <= high:
                    raise RatingsValidationError(
                        f"Rating {rating} of user {user} on item {item} outside [{low}, {high}]")

        return cls._build(ratings, low, high)

    @classmethod
    def _build(cls, ratings: Dict[int, Dict[int, float]], low: float, high: float) -> 'RatingMatrix':
        index: Dict[int, Set[int]] = {}
        for user, profile in ratings.items():
            for item in profile:
                index.setdefault(item, set()).add(user)
        return cls(
            ratings={u: dict(p) for u, p in sorted(ratings.items())},
            item_index={i: frozenset(us) for i, us in sorted(index.items())},
            scale_min=low,
            scale_max=high,
        )

    @property
    def n_users(self) -> int:
        return len(self.ratings)

    @property
    def n_items(self) -> int:
        return len(self.item_index)

    @property
    def n_ratings(self) -> int:
        return sum(len(p) for p in self.ratings.values())

    @cached_property
    def user_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(self.ratings))

    @cached_property
    def _user_means(self) -> Dict[int, float]:
        return {u: math.fsum(p.values()) / len(p) for u, p in self.ratings.items() if p}

    def has_user(self, user: int) -> bool:
        return user in self.ratings

    def has_item(self, item: int) -> bool:
        return item in self.item_index

    def profile(self, user: int) -> Mapping[int, float]:
        """Return the item -> rating profile of a user."""
        try:
            return self.ratings[user]
        except KeyError:
            raise UnknownUserError(user) from None

    def rating(self, user: int, item: int) -> Optional[float]:
        return self.ratings.get(user, {}).get(item)

    def item_mean(self, item: int) -> Optional[float]:
        users = self.item_index.get(item)
        if not users:
            return None
        return math.fsum(self.ratings[u][item] for u in users) / len(users)

    def global_mean(self) -> float:
        values = [r for p in self.ratings.values() for r in p.values()]
        if not values:
            raise RatingsValidationError("Rating matrix is empty")
        return math.fsum(values) / len(values)

    def clamp(self, value: float) -> float:
        return min(max(value, self.scale_min), self.scale_max)

    def triples(self) -> Iterator[Triple]:
        """Iterate (user, item, rating) in ascending (user, item) order."""
        for user in self.user_ids:
            for item in sorted(self.ratings[user]):
                yield user, item, self.ratings[user][item]

    def without(self, user: int, items: Iterable[int]) -> 'RatingMatrix':
        """Return a copy with the given ratings of one user removed."""
        drop = set(items).intersection(self.profile(user))
        ratings = dict(self.ratings)
        profile = {i: r for i, r in self.ratings[user].items() if i not in drop}
        if profile:
            ratings[user] = profile
        else:
            del ratings[user]

        # only the dropped items' rater sets change
        index = dict(self.item_index)
        for item in drop:
            raters = index[item] - {user}
            if raters:
                index[item] = raters
            else:
                del index[item]
        return RatingMatrix(ratings=ratings, item_index=index,
                            scale_min=self.scale_min, scale_max=self.scale_max)

    def subset(self, users: Iterable[int]) -> 'RatingMatrix':
        """Restrict the matrix to the given users; unrated items drop out."""
        keep = {}
        for user in users:
            keep[user] = dict(self.profile(user))
        if not keep:
            raise RatingsValidationError("Cannot build a matrix without users")
        return self._build(keep, self.scale_min, self.scale_max)

    def summary(self) -> Dict[str, float]:
        cells = self.n_users * self.n_items
        return {
            'n_users': self.n_users,
            'n_items': self.n_items,
            'n_ratings': self.n_ratings,
            'density': self.n_ratings / cells if cells else 0.0,
            'scale_min': self.scale_min,
            'scale_max': self.scale_max,
        }

    def check_invariants(self) -> List[str]:
        """Return a list of invariant violations (empty when consistent)."""
        problems = []
        forward = {(u, i) for u, p in self.ratings.items() for i in p}
        backward = {(u, i) for i, us in self.item_index.items() for u in us}
        if forward != backward:
            problems.append("item index is not the transpose of the ratings")
        for u, i in sorted(forward):
            r = self.ratings[u][i]
            if not self.scale_min <= r <= self.scale_max:
                problems.append(f"rating {r} of user {u} on item {i} outside [{self.scale_min}, {self.scale_max}]")
        return problems


@dataclass(frozen=True)
class SplitConfig:
    fraction: float = 0.2
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ParameterError(f"Test fraction must lie in (0, 1), got {self.fraction}")


@dataclass(frozen=True)
class RatingSplit:
    train: RatingMatrix
    test: RatingMatrix
    seed: int
    test_fraction: float
    test_users: Tuple[int, ...] = field(default=())


def _parse_line(tokens: List[str], line_number: int) -> Triple:
    if len(tokens) < 3:
        raise RatingsParseError(f"Expected 'user item rating', got {len(tokens)} field(s)", line_number)
    try:
        user = int(tokens[0])
        item = int(tokens[1])
    except ValueError:
        raise RatingsParseError(f"User and item ids must be integers: {tokens[0]!r} {tokens[1]!r}",
                                line_number) from None
    try:
        rating = float(tokens[2])
    except ValueError:
        raise RatingsParseError(f"Rating is not a number: {tokens[2]!r}", line_number) from None
    if not math.isfinite(rating):
        raise RatingsParseError(f"Rating is not finite: {tokens[2]!r}", line_number)
    return user, item, rating


def _is_header(tokens: List[str]) -> bool:
    for token in tokens:
        try:
            float(token)
            return False
        except ValueError:
            continue
    return True


def parse_ratings_file(path, format: str = 'generic') -> RatingMatrix:
    """
    Load a ratings file of `user item rating` lines.

    Fields may be separated by whitespace or commas; blank lines and lines
    starting with '#' are skipped, and a leading all-text header line is
    tolerated. A repeated (user, item) pair keeps its last rating.

    Args:
        path: Path of the ratings file.
        format: One of 'filmtrust', 'epinions' or 'generic'.

    Returns:
        RatingMatrix: The loaded matrix with the format's rating scale.

    Raises:
        ParameterError: If the format is unknown.
        FileNotFoundError: If the file does not exist.
        RatingsParseError: If a line is malformed.
        RatingsValidationError: If the file is empty or a rating is off-scale.
    """
    if format not in SCALES:
        raise ParameterError(f"Unknown dataset format {format!r}; expected one of {sorted(SCALES)}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Ratings file not found: {path}")

    scale = SCALES[format]
    ratings: Dict[int, Dict[int, float]] = {}
    seen_data = False
    duplicates = 0

    with open(path, 'rb') as f:
        for line_number, raw in enumerate(f, 1):
            try:
                text = raw.decode('utf-8').strip()
            except UnicodeDecodeError as e:
                raise RatingsParseError(f"Invalid UTF-8 byte {raw[e.start]:#04x}", line_number) from e
            if not text or text.startswith('#'):
                continue
            tokens = [t for t in _SEPARATOR.split(text) if t]
            if not seen_data and _is_header(tokens):
                logger.info("Skipping header line %d in %s", line_number, path)
                seen_data = True
                continue
            seen_data = True
            user, item, rating = _parse_line(tokens, line_number)
            if scale is not None and not scale[0] <= rating <= scale[1]:
                raise RatingsValidationError(
                    f"Rating {rating} outside [{scale[0]}, {scale[1]}]", line_number)
            profile = ratings.setdefault(user, {})
            if item in profile:
                duplicates += 1
            profile[item] = rating

    if not ratings:
        raise RatingsValidationError(f"Ratings file is empty: {path}")
    if duplicates:
        logger.warning("%d duplicate (user, item) lines in %s; kept the last occurrence", duplicates, path)

    if scale is None:
        matrix = RatingMatrix.from_triples(
            ((u, i, r) for u, p in ratings.items() for i, r in p.items()))
    else:
        matrix = RatingMatrix._build(ratings, scale[0], scale[1])
    logger.info("Loaded %d ratings from %d users on %d items (%s)",
                matrix.n_ratings, matrix.n_users, matrix.n_items, path)
    return matrix


def split_ratings(m: RatingMatrix, test_fraction: float, seed: int) -> RatingSplit:
    """
    Split ratings into disjoint train and test matrices.

    A seeded permutation of all (user, item) pairs is walked in order and
    pairs are moved to test until round(test_fraction * n_ratings) are
    taken. A user's last remaining train rating is never moved, so every
    test user also appears in train. The test matrix is empty when no
    rating can be moved, for example when every user has a single rating.

    Raises:
        ParameterError: If test_fraction is not inside (0, 1).
    """
    SplitConfig(test_fraction, seed)

    pairs = [(u, i) for u, i, _ in m.triples()]
    target = int(round(test_fraction * len(pairs)))
    rng = seeded_rng(seed)
    order = rng.permutation(len(pairs))

    remaining = {u: len(p) for u, p in m.ratings.items()}
    test_pairs: Set[Tuple[int, int]] = set()
    for idx in order:
        if len(test_pairs) >= target:
            break
        user, item = pairs[idx]
        if remaining[user] > 1:
            remaining[user] -= 1
            test_pairs.add((user, item))

    train: Dict[int, Dict[int, float]] = {}
    test: Dict[int, Dict[int, float]] = {}
    for user, item, rating in m.triples():
        bucket = test if (user, item) in test_pairs else train
        bucket.setdefault(user, {})[item] = rating

    logger.info("Split %d ratings into %d train / %d test (seed=%d)",
                len(pairs), len(pairs) - len(test_pairs), len(test_pairs), seed)
    return RatingSplit(
        train=RatingMatrix._build(train, m.scale_min, m.scale_max),
        test=RatingMatrix._build(test, m.scale_min, m.scale_max),
        seed=seed,
        test_fraction=test_fraction,
        test_users=tuple(sorted(test)),
    )


def user_mean(m: RatingMatrix, u: int) -> float:
    """Arithmetic mean of a user's ratings."""
    if u not in m.ratings:
        raise UnknownUserError(u)
    return m._user_means[u]


def common_items(m: RatingMatrix, u: int, v: int) -> Set[int]:
    """Items rated by both users."""
    return set(m.profile(u)).intersection(m.profile(v))
