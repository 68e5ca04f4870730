"""Loss-landscape mapping over sensor placements and controller weights.

For a fixed body design, sweeping the weight grid in each environment yields
a binary success matrix per environment; their element-wise sum is the
overlap matrix, from which two scores are computed:

* learnability ``m_l``: fraction of the weight grid solving *all*
  environments (how big the generalist region is);
* interference resistance ``m_ci``: generalist cells divided by cells
  solving at least one environment (how likely a specialist weight setting
  is to generalize), zero for an all-zero overlap.

The design sweep enumerates a uniform grid over both sensor offsets and is
deterministic: output rows are ordered by design index regardless of worker
count. Because the environment suite is symmetric under reflection about
the x-axis, each design and its mirror image produce success matrices that
are exact transposes of one another; the sweep exploits this to skip half
the integrations (verifiable with ``exploit_symmetry=False``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import runner
from ._kernels import success_grid_kernel
from .sim import BodyDesign, Environment, EnvironmentSet, Pose, SimProfile

__all__ = [
    "WeightGrid",
    "DesignGrid",
    "OverlapMatrix",
    "DesignMetrics",
    "SweepRow",
    "success_matrix",
    "overlap",
    "metric_learnability",
    "metric_interference",
    "mirror_design",
    "mirror_environment",
    "mirror_permutation",
    "sweep_designs",
]


def _centered_grid(count: int, half_span: float) -> np.ndarray:
    """Evenly spaced values over [-half_span, half_span] with exact
    endpoints and exact antisymmetry (values[i] == -values[count-1-i]).

    The numerator (2i - (count-1)) * half_span is exact for the spans used
    here (1.0 and 0.5), and IEEE division then rounds symmetrically, so
    negation pairs and the +-half_span endpoints are exact."""
    if count == 1:
        return np.zeros(1, dtype=np.float64)
    idx = np.arange(count, dtype=np.float64)
    return (2.0 * idx - (count - 1)) * half_span / (count - 1)


@dataclass(frozen=True)
class WeightGrid:
    """Uniform grid of n weight values over [-1, 1]; n odd so 0 is on-grid."""

    n: int

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError("weight grid size must be odd and >= 3")

    @property
    def values(self) -> np.ndarray:
        return _centered_grid(self.n, 1.0)


@dataclass(frozen=True)
class DesignGrid:
    """Uniform grid of sensor coordinates over [-0.5, 0.5], per axis."""

    bins: int

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be >= 1")

    @property
    def positions(self) -> np.ndarray:
        return _centered_grid(self.bins, 0.5)

    @property
    def total_designs(self) -> int:
        return self.bins ** 4

    def design_at(self, index: int) -> BodyDesign:
        """Design for a row-major index over (l1.x, l1.y, l2.x, l2.y)."""
        b = self.bins
        if not 0 <= index < b ** 4:
            raise IndexError(f"design index {index} out of range")
        pos = self.positions
        i2y = index % b
        i2x = (index // b) % b
        i1y = (index // (b * b)) % b
        i1x = index // (b * b * b)
        return BodyDesign(l1=(pos[i1x], pos[i1y]), l2=(pos[i2x], pos[i2y]))

    def mirror_index(self, index: int) -> int:
        """Index of the mirrored design (sensors swapped, y negated)."""
        b = self.bins
        i2y = index % b
        i2x = (index // b) % b
        i1y = (index // (b * b)) % b
        i1x = index // (b * b * b)
        return ((i2x * b + (b - 1 - i2y)) * b + i1x) * b + (b - 1 - i1y)


@dataclass(frozen=True)
class OverlapMatrix:
    """Element-wise sum of K binary success matrices over the weight grid."""

    cells: np.ndarray
    k: int

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise ValueError("overlap cells must be a square matrix")
        if cells.size and (cells.min() < 0 or cells.max() > self.k):
            raise ValueError(f"overlap cells must lie in [0, {self.k}]")
        object.__setattr__(self, "cells", cells)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def level_counts(self) -> np.ndarray:
        """counts[k] = number of cells equal to k, for k = 0..K."""
        return np.bincount(self.cells.ravel().astype(np.int64), minlength=self.k + 1)


@dataclass(frozen=True)
class DesignMetrics:
    m_l: float
    m_ci: float
    counts: tuple[int, ...]  # cells solving exactly 1..K environments


@dataclass(frozen=True)
class SweepRow:
    design_index: int
    design: BodyDesign
    metrics: DesignMetrics
    overlap: OverlapMatrix


def success_matrix(
    design: BodyDesign,
    env: Environment,
    grid: WeightGrid,
    profile: SimProfile,
) -> np.ndarray:
    """n x n binary matrix; cell [i, j] = 1 iff policy (values[i], values[j])
    reaches the light source in ``env``. Row index selects w1."""
    out = np.zeros((grid.n, grid.n), dtype=np.uint8)
    success_grid_kernel(
        design.l1[0], design.l1[1], design.l2[0], design.l2[1],
        env.start.x, env.start.y, env.start.alpha,
        grid.values,
        profile.dt, profile.steps,
        profile.success_radius, profile.sensor_floor ** 2,
        out,
    )
    return out


def overlap(matrices) -> OverlapMatrix:
    """Cell-wise integer sum of per-environment success matrices."""
    mats = [np.asarray(m) for m in matrices]
    if not mats:
        raise ValueError("need at least one success matrix")
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise ValueError(f"success matrix shapes differ: {m.shape} vs {shape}")
    total = np.zeros(shape, dtype=np.int64)
    for m in mats:
        total += m
    return OverlapMatrix(cells=total, k=len(mats))


def metric_learnability(o: OverlapMatrix) -> float:
    """Fraction of weight cells that solve every environment."""
    counts = o.level_counts()
    return int(counts[o.k]) / (o.n * o.n)


def metric_interference(o: OverlapMatrix) -> float:
    """Generalist cells over cells solving at least one environment;
    0 for an all-zero overlap matrix."""
    counts = o.level_counts()
    solved_any = int(counts[1:].sum())
    if solved_any == 0:
        return 0.0
    return int(counts[o.k]) / solved_any


def _metrics_from_overlap(o: OverlapMatrix) -> DesignMetrics:
    counts = o.level_counts()
    return DesignMetrics(
        m_l=metric_learnability(o),
        m_ci=metric_interference(o),
        counts=tuple(int(c) for c in counts[1:]),
    )


def mirror_design(design: BodyDesign) -> BodyDesign:
    """Reflect a design about the robot's long axis: swap the sensors and
    negate their y offsets."""
    return BodyDesign(
        l1=(design.l2[0], -design.l2[1]),
        l2=(design.l1[0], -design.l1[1]),
    )


def mirror_environment(env: Environment) -> Environment:
    """Reflect an environment about the world x-axis."""
    s = env.start
    return Environment(Pose(s.x, -s.y, -s.alpha))


def mirror_permutation(envset: EnvironmentSet) -> list[int] | None:
    """Map each environment index to the index of its x-axis reflection,
    or None if the set is not closed under reflection."""
    keys = [(e.start.x, e.start.y, e.start.alpha) for e in envset]
    perm = []
    for e in envset:
        m = mirror_environment(e)
        key = (m.start.x, m.start.y, m.start.alpha)
        if key not in keys:
            return None
        perm.append(keys.index(key))
    return perm


def stratified_indices(values, count: int, strata: int, seed: int) -> list[int]:
    """Pick ``count`` indices spread across the value range.

    Values are split into ``strata`` equal-width bins between their min and
    max; picks rotate round-robin over the non-empty bins (seeded shuffle
    inside each bin) so the whole range is covered even when the
    distribution is heavily concentrated, as metric tables typically are.
    Returns sorted indices; deterministic in (values, count, strata, seed).
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    count = min(count, vals.size)
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        bin_of = np.minimum(((vals - lo) / (hi - lo) * strata).astype(np.int64),
                            strata - 1)
    else:
        bin_of = np.zeros(vals.size, dtype=np.int64)
    rng = runner.make_rng(runner.derive_seed(seed, 0x5a))
    pools = []
    for b in range(strata):
        members = np.flatnonzero(bin_of == b)
        if members.size:
            pools.append(list(members[rng.permutation(members.size)]))
    chosen: list[int] = []
    while len(chosen) < count:
        progressed = False
        for pool in pools:
            if pool and len(chosen) < count:
                chosen.append(int(pool.pop()))
                progressed = True
        if not progressed:
            break
    return sorted(chosen)


def _design_success_matrices(args):
    index, l1, l2, n, starts, dt, steps, radius, floor = args
    values = WeightGrid(n).values
    mats = np.zeros((starts.shape[0], n, n), dtype=np.uint8)
    for k in range(starts.shape[0]):
        success_grid_kernel(
            l1[0], l1[1], l2[0], l2[1],
            starts[k, 0], starts[k, 1], starts[k, 2],
            values, dt, steps, radius, floor ** 2,
            mats[k],
        )
    return index, mats


def sweep_designs(
    dgrid: DesignGrid,
    wgrid: WeightGrid,
    envset: EnvironmentSet,
    profile: SimProfile,
    *,
    workers: int = 1,
    exploit_symmetry: bool = True,
    keep_success_matrices: bool = False,
    on_design=None,
) -> list[SweepRow]:
    """Evaluate every design on the grid and score its weight landscape.

    Designs are enumerated row-major over (l1.x, l1.y, l2.x, l2.y). Results
    are returned in design-index order and are byte-identical for any worker
    count. With ``exploit_symmetry`` (and an environment suite closed under
    x-axis reflection), mirrored designs are derived by transposing their
    partner's success matrices instead of re-integrating; the derived values
    are exact, not approximate.

    ``on_design`` (optional) receives ``(row, success_matrices)`` for every
    design in index order, e.g. to stream matrices to disk.
    """
    starts = envset.start_array()
    perm = mirror_permutation(envset) if exploit_symmetry else None

    total = dgrid.total_designs
    reps = []
    derived_from: dict[int, int] = {}
    if perm is None:
        reps = list(range(total))
    else:
        for i in range(total):
            j = dgrid.mirror_index(i)
            if i <= j:
                reps.append(i)
            else:
                derived_from[i] = j

    tasks = []
    for i in reps:
        d = dgrid.design_at(i)
        tasks.append((i, d.l1, d.l2, wgrid.n, starts, profile.dt, profile.steps,
                      profile.success_radius, profile.sensor_floor))
    results = runner.parallel_map(_design_success_matrices, tasks, workers=workers)
    by_index = {i: mats for i, mats in results}

    rows: list[SweepRow] = []
    for i in range(total):
        if i in by_index:
            mats = by_index[i]
        else:
            src = by_index[derived_from[i]]
            mats = np.stack([src[perm[k]].T for k in range(src.shape[0])])
        o = overlap(list(mats))
        row = SweepRow(
            design_index=i,
            design=dgrid.design_at(i),
            metrics=_metrics_from_overlap(o),
            overlap=o,
        )
        if on_design is not None:
            on_design(row, mats if keep_success_matrices else None)
        rows.append(row)
    return rows
