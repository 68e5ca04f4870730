"""Derivative-free policy training and the parallel hill climber.

The training loss for a (design, policy) pair is the sum over environments
of the trajectory's closest approach to the light source; a candidate
"solves" an environment when that approach is within the success radius.
Four optimizers share one budgeted evaluation loop: pure random search,
generating-set (compass) search, separable natural evolution strategies,
and differential evolution. Every run is a pure function of
(method, seed, budget, objective): records are bit-reproducible.

The hill climber is a population of independent (1+1) climbers over policy
space whose per-environment fitness is the inverse squared end-of-trial
distance; every accepted mutation logs the negated change in end distances,
the raw material for the lineage interference metrics in
:mod:`morpho.analysis`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .runner import derive_seed, make_rng, parallel_map
from .sim import BodyDesign, EnvironmentSet, Policy, SimProfile, trial_distances

__all__ = [
    "Bounds",
    "WEIGHT_BOUNDS",
    "DESIGN_BOUNDS",
    "GENOME_BOUNDS",
    "METHODS",
    "COMBINATORS",
    "OptRunRecord",
    "TrainRecord",
    "MutationEvent",
    "LineageLog",
    "loss",
    "make_objective",
    "minimize",
    "train_sweep",
    "mean_evaluations",
    "combine_fitness",
    "hill_climb",
]

METHODS = ("random", "gss", "snes", "de")
COMBINATORS = ("sum", "product", "min")


@dataclass(frozen=True)
class Bounds:
    """Per-dimension search box."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lows = np.asarray(self.lows, dtype=np.float64)
        highs = np.asarray(self.highs, dtype=np.float64)
        if lows.shape != highs.shape or lows.ndim != 1:
            raise ValueError("bounds must be matching 1-D arrays")
        if not (lows < highs).all():
            raise ValueError("each low bound must be below its high bound")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)

    @property
    def dim(self) -> int:
        return self.lows.size

    @property
    def ranges(self) -> np.ndarray:
        return self.highs - self.lows

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lows, self.highs)

    def contains(self, x: np.ndarray) -> bool:
        return bool((x >= self.lows).all() and (x <= self.highs).all())


WEIGHT_BOUNDS = Bounds(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
DESIGN_BOUNDS = Bounds(np.full(4, -0.5), np.full(4, 0.5))
GENOME_BOUNDS = Bounds(np.array([-0.5] * 4 + [-1.0] * 2),
                       np.array([0.5] * 4 + [1.0] * 2))


def loss(
    design: BodyDesign,
    policy: Policy,
    envset: EnvironmentSet,
    profile: SimProfile,
) -> tuple[float, int]:
    """(sum of per-environment closest approaches, environments solved)."""
    min_d, _, solved = trial_distances(design, policy, envset.start_array(), profile)
    return float(min_d.sum()), solved


def make_objective(design: BodyDesign, envset: EnvironmentSet, profile: SimProfile):
    """Objective over weight vectors: w -> (loss, environments solved)."""
    starts = envset.start_array()

    def objective(w: np.ndarray) -> tuple[float, int]:
        min_d, _, solved = trial_distances(
            design, Policy(w[0], w[1]), starts, profile
        )
        return float(min_d.sum()), solved

    return objective


@dataclass(frozen=True)
class OptRunRecord:
    """Full trace of one budgeted optimization run.

    ``best_loss_curve`` holds (evaluation index, best loss so far) at every
    improvement; ``success_count_curve`` holds (evaluation index, most
    environments solved by any candidate so far) at every increase.
    ``evals_to_full_success`` is None for censored runs (the target count
    was never reached within budget).
    """

    method: str
    seed: int
    budget: int
    evals_used: int
    best_loss: float
    best_x: tuple[float, ...]
    best_loss_curve: tuple[tuple[int, float], ...]
    success_count_curve: tuple[tuple[int, int], ...]
    evals_to_full_success: int | None

    @property
    def censored(self) -> bool:
        return self.evals_to_full_success is None

    @property
    def envs_solved(self) -> int:
        return self.success_count_curve[-1][1] if self.success_count_curve else 0


class _Exhausted(Exception):
    """Signals that the evaluation budget is spent or the target is hit."""


class _Recorder:
    def __init__(self, objective, budget, success_target, stop_on_full_success):
        self.objective = objective
        self.budget = budget
        self.success_target = success_target
        self.stop = stop_on_full_success
        self.evals_used = 0
        self.best_loss = math.inf
        self.best_x = None
        self.loss_curve = []
        self.success_curve = []
        self.best_solved = 0
        self.evals_to_full_success = None

    def evaluate(self, x: np.ndarray) -> float:
        if self.evals_used >= self.budget:
            raise _Exhausted
        value, solved = self.objective(x)
        self.evals_used += 1
        if value < self.best_loss:
            self.best_loss = value
            self.best_x = np.array(x, dtype=np.float64)
            self.loss_curve.append((self.evals_used, value))
        if solved > self.best_solved:
            self.best_solved = solved
            self.success_curve.append((self.evals_used, solved))
            if (self.success_target is not None
                    and solved >= self.success_target
                    and self.evals_to_full_success is None):
                self.evals_to_full_success = self.evals_used
                if self.stop:
                    raise _Exhausted
        return value


def _run_random(rec: _Recorder, bounds: Bounds, rng) -> None:
    while True:
        rec.evaluate(rng.uniform(bounds.lows, bounds.highs))


def _run_gss(rec: _Recorder, bounds: Bounds, rng) -> None:
    """Compass search: poll +-e_i, expand x2 on improvement, halve after a
    fully failed polling round, stop when every step drops below 1e-6."""
    x = rng.uniform(bounds.lows, bounds.highs)
    fx = rec.evaluate(x)
    step = 0.1 * bounds.ranges
    while (step >= 1e-6).any():
        best_f = fx
        best_x = None
        for i in range(bounds.dim):
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[i] += sign * step[i]
                cand = bounds.clip(cand)
                f = rec.evaluate(cand)
                if f < best_f:
                    best_f = f
                    best_x = cand
        if best_x is not None:
            x, fx = best_x, best_f
            step = np.minimum(step * 2.0, bounds.ranges)
        else:
            step = step * 0.5


def _run_snes(rec: _Recorder, bounds: Bounds, rng) -> None:
    """Separable NES with rank-based utilities; candidates are clipped into
    the box for evaluation while the search distribution tracks raw draws."""
    dim = bounds.dim
    lam = 4 + int(3 * math.log(dim))
    utilities = np.maximum(0.0, math.log(lam / 2 + 1) - np.log(np.arange(1, lam + 1)))
    utilities = utilities / utilities.sum() - 1.0 / lam
    eta_sigma = (3 + math.log(dim)) / (5 * math.sqrt(dim))
    mu = rng.uniform(bounds.lows, bounds.highs)
    sigma = 0.25 * bounds.ranges
    while True:
        z = rng.standard_normal((lam, dim))
        candidates = np.clip(mu + sigma * z, bounds.lows, bounds.highs)
        losses = np.array([rec.evaluate(candidates[i]) for i in range(lam)])
        order = np.argsort(losses, kind="stable")
        zs = z[order]
        mu = bounds.clip(mu + sigma * (utilities @ zs))
        sigma = sigma * np.exp(0.5 * eta_sigma * (utilities @ (zs * zs - 1.0)))


def _run_de(rec: _Recorder, bounds: Bounds, rng) -> None:
    """DE/rand/1/bin, population 20, F = 0.7, CR = 0.9, clip to bounds."""
    npop, f_scale, cr = 20, 0.7, 0.9
    dim = bounds.dim
    pop = rng.uniform(bounds.lows, bounds.highs, (npop, dim))
    fits = np.array([rec.evaluate(pop[i]) for i in range(npop)])
    while True:
        for i in range(npop):
            others = [j for j in range(npop) if j != i]
            r1, r2, r3 = rng.choice(others, size=3, replace=False)
            mutant = pop[r1] + f_scale * (pop[r2] - pop[r3])
            cross = rng.random(dim) < cr
            cross[int(rng.integers(dim))] = True
            trial = np.where(cross, mutant, pop[i])
            trial = bounds.clip(trial)
            f = rec.evaluate(trial)
            if f <= fits[i]:
                pop[i] = trial
                fits[i] = f


_RUNNERS = {
    "random": _run_random,
    "gss": _run_gss,
    "snes": _run_snes,
    "de": _run_de,
}


def minimize(
    method: str,
    objective,
    bounds: Bounds,
    budget: int,
    seed: int,
    *,
    success_target: int | None = None,
    stop_on_full_success: bool = True,
) -> OptRunRecord:
    """Run one budgeted optimization and return its full record.

    ``objective`` maps a bounded vector to (loss, environments_solved);
    plain scalar objectives can return (value, 0). ``success_target`` is
    the solved-count that ends the run early (when ``stop_on_full_success``)
    and defines ``evals_to_full_success``; None disables both.
    """
    if method not in _RUNNERS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rec = _Recorder(objective, budget, success_target, stop_on_full_success)
    rng = make_rng(seed)
    try:
        _RUNNERS[method](rec, bounds, rng)
    except _Exhausted:
        pass
    return OptRunRecord(
        method=method,
        seed=seed,
        budget=budget,
        evals_used=rec.evals_used,
        best_loss=rec.best_loss,
        best_x=tuple(float(v) for v in rec.best_x),
        best_loss_curve=tuple(rec.loss_curve),
        success_count_curve=tuple(rec.success_curve),
        evals_to_full_success=rec.evals_to_full_success,
    )


@dataclass(frozen=True)
class TrainRecord:
    """Summary row of one training run (one design, method, seed)."""

    design_index: int
    method: str
    seed: int
    evals_to_full_success: int | None
    final_loss: float
    envs_solved: int
    budget: int


def _train_task(args) -> TrainRecord:
    design_index, design, method, seed, budget, envset, profile = args
    record = minimize(
        method,
        make_objective(design, envset, profile),
        WEIGHT_BOUNDS,
        budget,
        seed,
        success_target=len(envset),
    )
    return TrainRecord(
        design_index=design_index,
        method=method,
        seed=seed,
        evals_to_full_success=record.evals_to_full_success,
        final_loss=record.best_loss,
        envs_solved=record.envs_solved,
        budget=budget,
    )


def train_sweep(
    designs,
    methods,
    seeds_per_design: int,
    budget: int,
    envset: EnvironmentSet,
    profile: SimProfile,
    *,
    workers: int = 1,
    master_seed: int = 0,
) -> list[TrainRecord]:
    """Train every (design, method, repetition) combination.

    ``designs`` is a sequence of (design_index, BodyDesign) pairs. Each
    run's RNG stream is derived from (master_seed, design_index, method
    position, repetition), so the table is deterministic and independent of
    worker count. Rows are ordered by (design position, method position,
    repetition).
    """
    if seeds_per_design < 1:
        raise ValueError("seeds_per_design must be >= 1")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    tasks = []
    for design_index, design in designs:
        for mi, method in enumerate(methods):
            for rep in range(seeds_per_design):
                seed = derive_seed(master_seed, design_index, mi, rep)
                tasks.append((design_index, design, method, seed, budget, envset, profile))
    return parallel_map(_train_task, tasks, workers=workers)


def mean_evaluations(records, budget: int) -> dict[tuple[int, str], float]:
    """Per (design, method) mean evaluations-to-full-success, censored runs
    counted at budget + 1."""
    sums: dict[tuple[int, str], list[float]] = {}
    for r in records:
        val = budget + 1 if r.evals_to_full_success is None else r.evals_to_full_success
        sums.setdefault((r.design_index, r.method), []).append(float(val))
    return {key: sum(v) / len(v) for key, v in sums.items()}


def combine_fitness(kind: str, f) -> float:
    """Combine per-environment fitness values by sum, product, or min."""
    values = np.asarray(f, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("fitness vector must be non-empty and 1-D")
    if kind == "sum":
        return float(values.sum())
    if kind == "product":
        if (values <= 0).any():
            raise ValueError("product combinator requires positive fitness values")
        return float(values.prod())
    if kind == "min":
        return float(values.min())
    raise ValueError(f"unknown combinator {kind!r}; expected one of {COMBINATORS}")


@dataclass(frozen=True)
class MutationEvent:
    """One accepted mutation: fitness strictly improved."""

    climber: int
    generation: int
    parent_distances: tuple[float, ...]
    child_distances: tuple[float, ...]
    delta: tuple[float, ...]  # negated distance change; positive = improvement
    fitness_before: float
    fitness_after: float


@dataclass(frozen=True)
class LineageLog:
    """Complete history of one hill-climber run."""

    kind: str
    pop: int
    generations: int
    mutation_scale: float
    seed: int
    k: int
    initial_distances: tuple[tuple[float, ...], ...]
    initial_fitness: tuple[float, ...]
    final_distances: tuple[tuple[float, ...], ...]
    final_fitness: tuple[float, ...]
    events: tuple[MutationEvent, ...] = field(default=())

    def fitness_trace(self, climber: int) -> list[float]:
        """Initial fitness followed by each accepted improvement."""
        trace = [self.initial_fitness[climber]]
        trace.extend(e.fitness_after for e in self.events if e.climber == climber)
        return trace


def _end_distance_fitness(end_d: np.ndarray, floor: float) -> np.ndarray:
    return 1.0 / np.maximum(end_d, floor) ** 2


def hill_climb(
    envset: EnvironmentSet,
    profile: SimProfile,
    kind: str,
    pop: int,
    generations: int,
    m: float,
    seed: int,
    design: BodyDesign,
) -> LineageLog:
    """Population of independent (1+1) climbers over the two policy weights.

    Each generation every child weight is its parent's plus Gaussian noise
    of scale ``m`` (clipped to [-1, 1]); a child replaces its parent only on
    strictly higher combined fitness. Per-environment fitness is
    1 / max(end_distance, success_radius)^2 measured over the full horizon
    (no early stop), so end distances stay comparable across candidates.
    """
    if kind not in COMBINATORS:
        raise ValueError(f"unknown combinator {kind!r}")
    if pop < 1 or generations < 1 or m < 0:
        raise ValueError("need pop >= 1, generations >= 1, m >= 0")
    starts = envset.start_array()
    k = len(envset)
    floor = profile.success_radius
    rng = make_rng(seed)

    def measure(w1: float, w2: float) -> tuple[np.ndarray, float]:
        _, end_d, _ = trial_distances(
            design, Policy(w1, w2), starts, profile, stop_on_success=False
        )
        return end_d, combine_fitness(kind, _end_distance_fitness(end_d, floor))

    weights = rng.uniform(-1.0, 1.0, (pop, 2))
    distances = np.empty((pop, k))
    fitness = np.empty(pop)
    for i in range(pop):
        distances[i], fitness[i] = measure(weights[i, 0], weights[i, 1])
    initial_distances = tuple(tuple(row) for row in distances)
    initial_fitness = tuple(fitness)

    events: list[MutationEvent] = []
    for gen in range(1, generations + 1):
        noise = rng.normal(0.0, m, (pop, 2)) if m > 0 else np.zeros((pop, 2))
        children = np.clip(weights + noise, -1.0, 1.0)
        for i in range(pop):
            child_d, child_f = measure(children[i, 0], children[i, 1])
            if child_f > fitness[i]:
                events.append(MutationEvent(
                    climber=i,
                    generation=gen,
                    parent_distances=tuple(distances[i]),
                    child_distances=tuple(child_d),
                    delta=tuple(-(child_d - distances[i])),
                    fitness_before=float(fitness[i]),
                    fitness_after=float(child_f),
                ))
                weights[i] = children[i]
                distances[i] = child_d
                fitness[i] = child_f

    return LineageLog(
        kind=kind,
        pop=pop,
        generations=generations,
        mutation_scale=m,
        seed=seed,
        k=k,
        initial_distances=initial_distances,
        initial_fitness=initial_fitness,
        final_distances=tuple(tuple(row) for row in distances),
        final_fitness=tuple(fitness),
        events=tuple(events),
    )
