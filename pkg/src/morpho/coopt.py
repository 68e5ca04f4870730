"""Simultaneous design + policy optimization against per-environment goals.

Each candidate genome is scored by the vector of closest approaches to the
light source, one component per environment, all minimized. A generational
multi-objective EA (non-dominated sorting with crowding-distance survival,
binary tournaments, uniform crossover, per-gene Gaussian mutation) evolves
either the full six-gene genome (two sensor offsets + two weights) or, for
the baseline arm, just the two weights with the design pinned to the
canonical symmetric placement.

Alongside the Pareto archive the run records a sensor-homeostasis trace:
every genome admitted to the archive is scored with the aggregate DTW
distance between its sensor experiences across environments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import StatResult, aggregate_dtw, mann_whitney
from .optimizers import GENOME_BOUNDS, WEIGHT_BOUNDS, Bounds
from .runner import make_rng
from .sim import (
    CANONICAL_DESIGN,
    BodyDesign,
    EnvironmentSet,
    Policy,
    SimProfile,
    trial_distances,
)

__all__ = [
    "Admission",
    "CooptRunRecord",
    "co_optimize",
    "baseline_optimize",
    "compare_runs",
    "DEFAULT_POPULATION",
]

DEFAULT_POPULATION = 52
_CROSSOVER_PROB = 0.9
_MUTATION_PROB = 1.0 / 6.0
_MUTATION_SCALE = 0.05  # fraction of each gene's range


@dataclass(frozen=True)
class Admission:
    """A genome entering the non-dominated archive."""

    eval_index: int
    genome: tuple[float, ...]
    objectives: tuple[float, ...]
    dtw: float


@dataclass(frozen=True)
class CooptRunRecord:
    """Trace of one co-optimization (or baseline) run."""

    arm: str  # "coopt" or "baseline"
    seed: int
    budget: int
    population: int
    evals_used: int
    best_loss: float
    best_genome: tuple[float, ...]
    best_loss_curve: tuple[tuple[int, float], ...]
    success_count_curve: tuple[tuple[int, int], ...]
    evals_to_full_success: int | None
    admissions: tuple[Admission, ...]

    @property
    def censored(self) -> bool:
        return self.evals_to_full_success is None

    @property
    def envs_solved(self) -> int:
        return self.success_count_curve[-1][1] if self.success_count_curve else 0


def _non_dominated_ranks(objs: np.ndarray) -> np.ndarray:
    """Pareto rank per row (0 = first front), minimization, O(N^2 K)."""
    n = objs.shape[0]
    dominated_count = np.zeros(n, dtype=np.int64)
    dominates: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            le = objs[i] <= objs[j]
            ge = objs[i] >= objs[j]
            if le.all() and not ge.all():
                dominates[i].append(j)
                dominated_count[j] += 1
            elif ge.all() and not le.all():
                dominates[j].append(i)
                dominated_count[i] += 1
    ranks = np.empty(n, dtype=np.int64)
    current = [i for i in range(n) if dominated_count[i] == 0]
    rank = 0
    while current:
        nxt = []
        for i in current:
            ranks[i] = rank
            for j in dominates[i]:
                dominated_count[j] -= 1
                if dominated_count[j] == 0:
                    nxt.append(j)
        current = nxt
        rank += 1
    return ranks


def _crowding_distance(objs: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Crowding distance of `members` (indices into objs) within their front."""
    m = members.size
    dist = np.zeros(m, dtype=np.float64)
    for d in range(objs.shape[1]):
        vals = objs[members, d]
        order = np.argsort(vals, kind="stable")
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = vals[order[-1]] - vals[order[0]]
        if span > 0 and m > 2:
            inner = order[1:-1]
            dist[inner] += (vals[order[2:]] - vals[order[:-2]]) / span
    return dist


class _Archive:
    """Unbounded archive of mutually non-dominated objective vectors."""

    def __init__(self):
        self.objectives: list[np.ndarray] = []
        self.genomes: list[np.ndarray] = []

    def consider(self, objs: np.ndarray, genome: np.ndarray) -> bool:
        """Admit unless weakly dominated; evict members the newcomer
        dominates. Duplicates of an existing vector are not re-admitted."""
        for kept in self.objectives:
            if (kept <= objs).all():
                return False
        keep = [i for i, kept in enumerate(self.objectives)
                if not (objs <= kept).all()]
        self.objectives = [self.objectives[i] for i in keep]
        self.genomes = [self.genomes[i] for i in keep]
        self.objectives.append(objs.copy())
        self.genomes.append(genome.copy())
        return True


def _evolve(
    arm: str,
    bounds: Bounds,
    genome_to_pair,
    envset: EnvironmentSet,
    profile: SimProfile,
    budget: int,
    seed: int,
    population: int,
    compute_dtw: bool,
) -> CooptRunRecord:
    if population < 2 or population % 2:
        raise ValueError("population must be an even number >= 2")
    if budget < population:
        raise ValueError("budget must cover at least one full population")
    starts = envset.start_array()
    k = len(envset)
    rng = make_rng(seed)
    archive = _Archive()

    evals_used = 0
    best_loss = np.inf
    best_genome = None
    loss_curve: list[tuple[int, float]] = []
    success_curve: list[tuple[int, int]] = []
    best_solved = 0
    evals_to_full = None
    admissions: list[Admission] = []

    def evaluate(genome: np.ndarray) -> np.ndarray:
        nonlocal evals_used, best_loss, best_genome, best_solved, evals_to_full
        design, policy = genome_to_pair(genome)
        min_d, _, solved = trial_distances(design, policy, starts, profile)
        evals_used += 1
        total = float(min_d.sum())
        if total < best_loss:
            best_loss = total
            best_genome = genome.copy()
            loss_curve.append((evals_used, total))
        if solved > best_solved:
            best_solved = solved
            success_curve.append((evals_used, solved))
            if solved == k and evals_to_full is None:
                evals_to_full = evals_used
        if archive.consider(min_d, genome):
            score = float("nan")
            if compute_dtw:
                score = aggregate_dtw(design, policy, envset, profile)
            admissions.append(Admission(
                eval_index=evals_used,
                genome=tuple(float(g) for g in genome),
                objectives=tuple(float(v) for v in min_d),
                dtw=score,
            ))
        return min_d

    dim = bounds.dim
    pop = rng.uniform(bounds.lows, bounds.highs, (population, dim))
    objs = np.stack([evaluate(pop[i]) for i in range(population)])

    generations = budget // population - 1
    sigma = _MUTATION_SCALE * bounds.ranges
    for _ in range(generations):
        ranks = _non_dominated_ranks(objs)
        crowd = np.empty(population, dtype=np.float64)
        for r in np.unique(ranks):
            members = np.flatnonzero(ranks == r)
            crowd[members] = _crowding_distance(objs, members)

        def tournament() -> int:
            a, b = rng.integers(population, size=2)
            if ranks[a] != ranks[b]:
                return int(a if ranks[a] < ranks[b] else b)
            if crowd[a] != crowd[b]:
                return int(a if crowd[a] > crowd[b] else b)
            return int(a)

        children = np.empty_like(pop)
        for c in range(0, population, 2):
            p1 = pop[tournament()]
            p2 = pop[tournament()]
            if rng.random() < _CROSSOVER_PROB:
                mask = rng.random(dim) < 0.5
                children[c] = np.where(mask, p1, p2)
                children[c + 1] = np.where(mask, p2, p1)
            else:
                children[c] = p1
                children[c + 1] = p2
        mutate = rng.random((population, dim)) < _MUTATION_PROB
        noise = rng.standard_normal((population, dim)) * sigma
        children = np.clip(children + mutate * noise, bounds.lows, bounds.highs)

        child_objs = np.stack([evaluate(children[i]) for i in range(population)])

        merged = np.vstack([pop, children])
        merged_objs = np.vstack([objs, child_objs])
        ranks = _non_dominated_ranks(merged_objs)
        survivors: list[int] = []
        for r in np.unique(ranks):
            members = np.flatnonzero(ranks == r)
            if len(survivors) + members.size <= population:
                survivors.extend(int(i) for i in members)
            else:
                crowd = _crowding_distance(merged_objs, members)
                order = np.lexsort((members, -crowd))
                need = population - len(survivors)
                survivors.extend(int(members[i]) for i in order[:need])
            if len(survivors) == population:
                break
        pop = merged[survivors]
        objs = merged_objs[survivors]

    return CooptRunRecord(
        arm=arm,
        seed=seed,
        budget=budget,
        population=population,
        evals_used=evals_used,
        best_loss=best_loss,
        best_genome=tuple(float(g) for g in best_genome),
        best_loss_curve=tuple(loss_curve),
        success_count_curve=tuple(success_curve),
        evals_to_full_success=evals_to_full,
        admissions=tuple(admissions),
    )


def _full_genome_pair(genome: np.ndarray) -> tuple[BodyDesign, Policy]:
    return (
        BodyDesign(l1=(genome[0], genome[1]), l2=(genome[2], genome[3])),
        Policy(genome[4], genome[5]),
    )


def _baseline_genome_pair(genome: np.ndarray) -> tuple[BodyDesign, Policy]:
    return CANONICAL_DESIGN, Policy(genome[0], genome[1])


def co_optimize(
    envset: EnvironmentSet,
    profile: SimProfile,
    budget: int,
    seed: int,
    *,
    population: int = DEFAULT_POPULATION,
    compute_dtw: bool = True,
) -> CooptRunRecord:
    """Evolve sensor placement and policy together (six genes)."""
    return _evolve("coopt", GENOME_BOUNDS, _full_genome_pair,
                   envset, profile, budget, seed, population, compute_dtw)


def baseline_optimize(
    envset: EnvironmentSet,
    profile: SimProfile,
    budget: int,
    seed: int,
    *,
    population: int = DEFAULT_POPULATION,
    compute_dtw: bool = True,
) -> CooptRunRecord:
    """Identical machinery with the design pinned to the canonical
    placement; only the two policy weights evolve."""
    return _evolve("baseline", WEIGHT_BOUNDS, _baseline_genome_pair,
                   envset, profile, budget, seed, population, compute_dtw)


def evals_with_censoring(records) -> list[float]:
    """Evaluations-to-full-success, censored runs counted at budget + 1."""
    return [
        float(r.budget + 1 if r.evals_to_full_success is None else r.evals_to_full_success)
        for r in records
    ]


def compare_runs(a, b) -> StatResult:
    """Two-sided Mann-Whitney test on evaluations-to-full-success."""
    if not a or not b:
        raise ValueError("both run lists must be non-empty")
    return mann_whitney(evals_with_censoring(a), evals_with_censoring(b))
