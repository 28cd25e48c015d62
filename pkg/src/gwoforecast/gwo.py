"""Grey Wolf Optimizer over bounded mixed (continuous / integer / categorical) spaces.

Every dimension kind rides a continuous "carrier" coordinate so the
encircling equations apply unchanged; integer and categorical values are
recovered by flooring, log-scaled continuous values by ``10 ** coord``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float
    log_scaled: bool = False
    name: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise ValueError(f"Continuous bounds must be finite with lo < hi, got ({self.lo}, {self.hi})")
        if self.log_scaled and self.lo <= 0:
            raise ValueError("log-scaled dimension requires lo > 0")

    @property
    def carrier(self) -> tuple[float, float]:
        if self.log_scaled:
            return math.log10(self.lo), math.log10(self.hi)
        return float(self.lo), float(self.hi)

    def decode(self, coord: float) -> float:
        return float(10.0 ** coord) if self.log_scaled else float(coord)

    def encode(self, value: float) -> float:
        return math.log10(value) if self.log_scaled else float(value)


@dataclass(frozen=True)
class Integer:
    lo: int
    hi: int
    name: str = ""

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ValueError("Integer bounds must be whole numbers")
        if self.hi < self.lo + 1:
            raise ValueError(f"Integer dimension needs hi >= lo + 1, got ({self.lo}, {self.hi})")

    @property
    def carrier(self) -> tuple[float, float]:
        return float(self.lo), float(np.nextafter(self.hi + 1.0, -np.inf))

    def decode(self, coord: float) -> int:
        return int(math.floor(coord))

    def encode(self, value: int) -> float:
        return float(value)


@dataclass(frozen=True)
class Categorical:
    option_count: int
    name: str = ""

    def __post_init__(self):
        if self.option_count < 2:
            raise ValueError("Categorical dimension needs at least 2 options")

    @property
    def carrier(self) -> tuple[float, float]:
        return 0.0, float(np.nextafter(float(self.option_count), -np.inf))

    def decode(self, coord: float) -> int:
        return int(math.floor(coord))

    def encode(self, value: int) -> float:
        return float(value)


DimensionSpec = Continuous | Integer | Categorical


class SearchSpace:
    """Ordered list of dimensions; the order fixes the position-vector layout."""

    def __init__(self, dims: Sequence[DimensionSpec]):
        if len(dims) == 0:
            raise ValueError("search space must have at least one dimension")
        self.dims = tuple(dims)
        bounds = np.array([d.carrier for d in self.dims], dtype=np.float64)
        self.lower = bounds[:, 0]
        self.upper = bounds[:, 1]

    def __len__(self) -> int:
        return len(self.dims)

    def names(self) -> list[str]:
        return [d.name or f"x{i}" for i, d in enumerate(self.dims)]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return clamp(rng.uniform(self.lower, self.upper), self)

    def encode(self, values: Sequence[Any]) -> np.ndarray:
        """Carrier position for a decoded point (inverse of :func:`decode`)."""
        if len(values) != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} values, got {len(values)}")
        return clamp(np.array([d.encode(v) for d, v in zip(self.dims, values)], dtype=np.float64), self)


@dataclass
class GwoConfig:
    pop_size: int = 10
    iterations: int = 30
    seed: int = 0
    seeded_candidates: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.pop_size < 4:
            raise ValueError("pop_size must be >= 4 (alpha, beta, delta and at least one omega)")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if len(self.seeded_candidates) > self.pop_size:
            raise ValueError("more seeded candidates than wolves")


@dataclass
class Leaders:
    """The three best-ever evaluated candidates, ordered alpha, beta, delta."""

    positions: list[np.ndarray]
    fitness: list[float]

    @property
    def alpha(self) -> tuple[np.ndarray, float]:
        return self.positions[0], self.fitness[0]

    @property
    def beta(self) -> tuple[np.ndarray, float]:
        return self.positions[1], self.fitness[1]

    @property
    def delta(self) -> tuple[np.ndarray, float]:
        return self.positions[2], self.fitness[2]


@dataclass
class Trace:
    best_fitness_per_iteration: list[float]
    wall_time_seconds: float
    evaluations: int
    initial_best_fitness: float = math.inf
    failures: int = 0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "best_fitness"])
            for i, f in enumerate(self.best_fitness_per_iteration, start=1):
                writer.writerow([i, repr(float(f))])

    def metadata(self, config: GwoConfig) -> dict:
        return {
            "seed": config.seed,
            "pop_size": config.pop_size,
            "iterations": config.iterations,
            "wall_time_seconds": self.wall_time_seconds,
            "evaluations": self.evaluations,
            "failures": self.failures,
        }

    def write_metadata(self, path: str | Path, config: GwoConfig) -> None:
        Path(path).write_text(json.dumps(self.metadata(config), indent=2))


def coefficient_a(t: int, T: int) -> float:
    """Exploration coefficient, linear from 2 at ``t=0`` to 0 at ``t=T``."""
    if T <= 0:
        raise ValueError("total iterations T must be >= 1")
    if not 0 <= t <= T:
        raise ValueError(f"iteration {t} outside [0, {T}]")
    return 2.0 * (1.0 - t / T)


def coefficient_vectors(a: float, r1, r2) -> tuple[np.ndarray, np.ndarray]:
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    if r1.shape != r2.shape:
        raise ValueError(f"r1 and r2 shapes differ: {r1.shape} vs {r2.shape}")
    return 2.0 * a * r1 - a, 2.0 * r2


def encircle_step(x, leader, A, C) -> np.ndarray:
    x, leader, A, C = (np.asarray(v, dtype=np.float64) for v in (x, leader, A, C))
    if not (x.shape == leader.shape == A.shape == C.shape):
        raise ValueError(f"length mismatch: x{x.shape} leader{leader.shape} A{A.shape} C{C.shape}")
    D = np.abs(C * leader - x)
    return leader - A * D


def pack_update(x: np.ndarray, leaders: Leaders, a: float, rng: np.random.Generator) -> np.ndarray:
    """Move one wolf toward the mean of its alpha-, beta- and delta-guided proposals."""
    x = np.asarray(x, dtype=np.float64)
    total = np.zeros_like(x)
    for leader in leaders.positions[:3]:
        if leader.shape != x.shape:
            raise ValueError(f"leader shape {leader.shape} does not match wolf shape {x.shape}")
        r1 = rng.random(x.shape[0])
        r2 = rng.random(x.shape[0])
        A, C = coefficient_vectors(a, r1, r2)
        total += encircle_step(x, leader, A, C)
    return total / 3.0


def clamp(p, space: SearchSpace) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (len(space),):
        raise ValueError(f"position has shape {p.shape}, space has {len(space)} dims")
    return np.clip(p, space.lower, space.upper)


def decode(p, space: SearchSpace) -> list:
    return [d.decode(float(c)) for d, c in zip(space.dims, p)]


def _sanitize(value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        return math.inf
    return value if math.isfinite(value) else math.inf


def _refresh(leaders: Leaders | None, positions: list[np.ndarray], fitness: list[float]) -> Leaders:
    # Incumbents sort ahead of newcomers on ties; newcomers tie-break by wolf index.
    pool = []
    if leaders is not None:
        pool += [(f, 0, k, p) for k, (p, f) in enumerate(zip(leaders.positions, leaders.fitness))]
    pool += [(f, 1, i, p) for i, (p, f) in enumerate(zip(positions, fitness))]
    pool.sort(key=lambda e: (e[0], e[1], e[2]))
    best = pool[:3]
    return Leaders([e[3].copy() for e in best], [e[0] for e in best])


def gwo_optimize(
    objective: Callable[[list], float],
    space: SearchSpace,
    config: GwoConfig,
    executor=None,
    callback: Callable[[int, Leaders], None] | None = None,
) -> tuple[list, float, Trace]:
    """Minimise ``objective`` over ``space``.

    Parameters
    ----------
    objective
        Maps a decoded solution (list of per-dimension values) to a fitness.
        Exceptions and non-finite results count as ``+inf``.
    executor
        Optional object with an order-preserving ``map`` (e.g. a
        ``concurrent.futures`` executor) used to evaluate one iteration's
        candidates. Results are identical to sequential evaluation because
        every wolf owns its random stream.

    Returns
    -------
    (best decoded solution, best fitness, trace)
    """
    start = time.perf_counter()
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed & _MASK64).spawn(config.pop_size)]
    failures = 0

    def evaluate(pos: np.ndarray) -> tuple[float, bool]:
        try:
            return _sanitize(objective(decode(pos, space))), False
        except Exception:
            return math.inf, True

    def evaluate_all(population: list[np.ndarray]) -> list[float]:
        nonlocal failures
        mapper = executor.map if executor is not None else map
        results = list(mapper(evaluate, population))
        failures += sum(failed for _, failed in results)
        return [f for f, _ in results]

    population = [clamp(c, space) for c in config.seeded_candidates]
    for i in range(len(population), config.pop_size):
        population.append(space.sample(streams[i]))
    fitness = evaluate_all(population)
    evaluations = len(population)
    leaders = _refresh(None, population, fitness)
    initial_best = leaders.fitness[0]

    history = []
    for t in range(1, config.iterations + 1):
        a = coefficient_a(t - 1, config.iterations)
        population = [clamp(pack_update(x, leaders, a, streams[i]), space) for i, x in enumerate(population)]
        fitness = evaluate_all(population)
        evaluations += len(population)
        leaders = _refresh(leaders, population, fitness)
        history.append(leaders.fitness[0])
        if callback is not None:
            callback(t, leaders)

    trace = Trace(
        best_fitness_per_iteration=history,
        wall_time_seconds=time.perf_counter() - start,
        evaluations=evaluations,
        initial_best_fitness=initial_best,
        failures=failures,
    )
    return decode(leaders.alpha[0], space), leaders.alpha[1], trace
