"""
Invasive weed optimization over the unit box [0, 1]^d.

The optimizer minimizes. Weeds reproduce in proportion to how good their
objective value is, seeds scatter around their parent with a normal
distribution whose spread shrinks over the iterations, and the merged
population is truncated to the best pop_max weeds.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.exceptions import ObjectiveError, ParameterError
from src.seeding import seeded_rng

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class IwoParams:
    s_min: int = 0
    s_max: int = 7
    sigma_initial: float = 1.0
    sigma_final: float = 0.001
    n: float = 5.0
    T: int = 300
    pop_initial: int = 10
    pop_max: int = 200

    def __post_init__(self):
        if not 0 <= self.s_min <= self.s_max:
            raise ParameterError(f"Seed counts must satisfy 0 <= s_min <= s_max, got {self.s_min}, {self.s_max}")
        if not 0.0 < self.sigma_final <= self.sigma_initial:
            raise ParameterError(
                f"Sigmas must satisfy 0 < sigma_final <= sigma_initial, got {self.sigma_final}, {self.sigma_initial}")
        if self.n <= 0:
            raise ParameterError(f"Modulation index n must be positive, got {self.n}")
        if self.T < 1:
            raise ParameterError(f"T must be at least 1, got {self.T}")
        if not 1 <= self.pop_initial <= self.pop_max:
            raise ParameterError(
                f"Populations must satisfy 1 <= pop_initial <= pop_max, got {self.pop_initial}, {self.pop_max}")


@dataclass(eq=False)
class Weed:
    """One candidate solution; fitness stays None until evaluated."""
    position: np.ndarray
    fitness: Optional[float] = None
    id: int = -1


class TraceRecord(NamedTuple):
    t: int
    best_fitness: float
    worst_fitness: float
    population_size: int
    sigma_t: float


@dataclass
class IwoTrace:
    records: List[TraceRecord] = field(default_factory=list)
    evaluations: int = 0

    @property
    def best_fitness(self) -> List[float]:
        return [r.best_fitness for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.t, r.best_fitness, r.worst_fitness, r.population_size, r.sigma_t) for r in self.records],
            columns=['t', 'best', 'worst', 'pop', 'sigma'],
        )


def seed_count(f: float, f_best: float, f_worst: float, params: IwoParams) -> int:
    """
    Number of seeds a weed with objective value f produces.

    The best weed gets s_max seeds and the worst s_min, linearly in between
    and rounded down. A flat population gives every weed s_max seeds.

    Raises:
        ParameterError: If f lies outside [f_best, f_worst].
    """
    if not f_best <= f <= f_worst:
        raise ParameterError(f"Fitness {f} outside population range [{f_best}, {f_worst}]")
    if f_best == f_worst:
        rho = 1.0
    else:
        rho = (f_worst - f) / (f_worst - f_best)
    return int(math.floor(params.s_min + (params.s_max - params.s_min) * rho))


def sigma_at(t: int, params: IwoParams) -> float:
    """Dispersal standard deviation at iteration t."""
    if not 0 <= t <= params.T:
        raise ParameterError(f"Iteration {t} outside [0, {params.T}]")
    ratio = ((params.T - t) / params.T) ** params.n
    return ratio * (params.sigma_initial - params.sigma_final) + params.sigma_final


def disperse(parent: Weed, sigma: float, rng: np.random.Generator, weed_id: int = -1) -> Weed:
    """Scatter a seed around its parent, clamped to the unit box."""
    if sigma <= 0:
        raise ParameterError(f"Sigma must be positive, got {sigma}")
    step = rng.normal(0.0, sigma, size=parent.position.shape)
    return Weed(position=np.clip(parent.position + step, 0.0, 1.0), id=weed_id)


def _rank(weed: Weed) -> Tuple[float, int]:
    return weed.fitness, weed.id


def truncate(population: Sequence[Weed], params: IwoParams) -> List[Weed]:
    """Keep the pop_max best weeds; ties go to the earlier-created weed."""
    if len(population) <= params.pop_max:
        return list(population)
    return sorted(population, key=_rank)[:params.pop_max]


class _Evaluator:
    def __init__(self, objective, vectorized: bool):
        self.objective = objective
        self.vectorized = vectorized
        self.evaluations = 0

    def __call__(self, weeds: List[Weed]) -> List[Weed]:
        if not weeds:
            return weeds
        if self.vectorized:
            values = np.asarray(self.objective(np.vstack([w.position for w in weeds])), dtype=float)
            if values.shape != (len(weeds),):
                raise ObjectiveError(float('nan'), weeds[0].position)
        else:
            values = [float(self.objective(w.position)) for w in weeds]
        for weed, value in zip(weeds, values):
            if not math.isfinite(value):
                raise ObjectiveError(value, weed.position)
            weed.fitness = float(value)
        self.evaluations += len(weeds)
        return weeds


def optimize(objective: Objective, dim: int, params: IwoParams, seed: int,
             initial_positions: Optional[Sequence[Sequence[float]]] = None,
             vectorized: bool = False) -> Tuple[Weed, IwoTrace]:
    """
    Minimize an objective over [0, 1]^dim.

    Args:
        objective: Maps a position to a finite value; with vectorized=True it
            maps an (m, dim) array to m values instead.
        dim: Number of coordinates.
        params: Optimizer constants.
        seed: Seed of the single generator every random draw comes from.
        initial_positions: Positions placed in the initial population before
            the remaining slots are filled uniformly at random.
        vectorized: Whether the objective evaluates batches.

    Returns:
        Tuple[Weed, IwoTrace]: The best weed ever evaluated and the run trace.

    Raises:
        ParameterError: If dim < 1 or too many initial positions are given.
        ObjectiveError: If the objective returns a non-finite value.
    """
    if dim < 1:
        raise ParameterError(f"Dimension must be at least 1, got {dim}")
    initial = [np.clip(np.asarray(p, dtype=float), 0.0, 1.0) for p in (initial_positions or [])]
    if len(initial) > params.pop_initial:
        raise ParameterError(f"{len(initial)} initial positions exceed pop_initial={params.pop_initial}")
    for p in initial:
        if p.shape != (dim,):
            raise ParameterError(f"Initial position has shape {p.shape}, expected ({dim},)")

    rng = seeded_rng(seed)
    evaluate = _Evaluator(objective, vectorized)
    trace = IwoTrace()

    # draw order: initial uniform block, then per iteration each weed's seeds in population order
    random_block = rng.random((params.pop_initial - len(initial), dim))
    positions = initial + list(random_block)
    population = evaluate([Weed(position=p, id=i) for i, p in enumerate(positions)])
    next_id = len(population)

    best = min(population, key=_rank)
    trace.records.append(TraceRecord(0, best.fitness, max(w.fitness for w in population),
                                     len(population), sigma_at(0, params)))

    for t in range(1, params.T + 1):
        f_best = min(w.fitness for w in population)
        f_worst = max(w.fitness for w in population)
        sigma = sigma_at(t, params)

        seeds = []
        for weed in population:
            for _ in range(seed_count(weed.fitness, f_best, f_worst, params)):
                seeds.append(disperse(weed, sigma, rng, weed_id=next_id))
                next_id += 1

        population = truncate(population + evaluate(seeds), params)

        leader = min(population, key=_rank)
        if leader.fitness < best.fitness:
            best = leader
        trace.records.append(TraceRecord(t, best.fitness, max(w.fitness for w in population),
                                         len(population), sigma))
        if t % 50 == 0:
            logger.debug("IWO t=%d best=%.6f pop=%d sigma=%.5f", t, best.fitness, len(population), sigma)

    trace.evaluations = evaluate.evaluations
    return replace(best, position=best.position.copy()), trace


def random_search(objective: Objective, dim: int, budget: int, seed: int,
                  vectorized: bool = False, batch_size: int = 1024) -> Weed:
    """Best of `budget` uniform samples from [0, 1]^dim."""
    if dim < 1 or budget < 1:
        raise ParameterError(f"Need dim >= 1 and budget >= 1, got {dim}, {budget}")
    rng = seeded_rng(seed)
    evaluate = _Evaluator(objective, vectorized)
    best: Optional[Weed] = None
    drawn = 0
    while drawn < budget:
        count = min(batch_size, budget - drawn)
        block = rng.random((count, dim))
        weeds = evaluate([Weed(position=p, id=drawn + j) for j, p in enumerate(block)])
        drawn += count
        leader = min(weeds, key=_rank)
        if best is None or leader.fitness < best.fitness:
            best = leader
    return best


def write_trace_csv(trace: IwoTrace, path_or_buffer) -> None:
    """Write the trace as CSV `t,best,worst,pop,sigma`."""
    trace.to_frame().to_csv(path_or_buffer, index=False)
