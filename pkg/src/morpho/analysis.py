"""Signal alignment and statistics for experiment analysis.

Contains the dynamic-time-warping distance used to score sensor
homeostasis (how similarly a design experiences different environments),
the correlation and rank-sum tests used across the experiment suite, and
the lineage-based interference metrics computed from hill-climber logs.

The statistical tests are self-contained: the Pearson p-value evaluates the
regularized incomplete beta function by continued fraction, and the
Mann-Whitney p-value is exact (full enumeration) for small untied samples,
falling back to a tie-corrected normal approximation with continuity
correction otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import dtw_kernel
from .sim import BodyDesign, EnvironmentSet, Policy, SimProfile, evaluate_all

__all__ = [
    "StatResult",
    "ChapterTwoMetrics",
    "dtw",
    "downsample",
    "aggregate_dtw",
    "pearson",
    "spearman",
    "mann_whitney",
    "bonferroni",
    "regularized_incomplete_beta",
    "chapter_two_metrics",
    "DTW_MAX_SAMPLES",
]

# Sensor traces are uniformly strided down to at most this many samples
# before alignment; full-horizon traces would make DTW quadratic-in-1e5.
DTW_MAX_SAMPLES = 500


@dataclass(frozen=True)
class StatResult:
    """A test statistic with its two-sided p-value and sample sizes."""

    statistic: float
    p_value: float
    n: int
    n2: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value out of range: {self.p_value}")


def _as_signal(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("signal must be a non-empty 1-D series")
    if not np.all(np.isfinite(arr)):
        raise ValueError("signal contains non-finite samples")
    return arr


def dtw(a, b) -> float:
    """Dynamic-time-warping distance between two series.

    Absolute-difference local cost; monotone step set {(i-1,j), (i,j-1),
    (i-1,j-1)}; both endpoints anchored; no window."""
    return float(dtw_kernel(_as_signal(a), _as_signal(b)))


def downsample(x, max_samples: int = DTW_MAX_SAMPLES) -> np.ndarray:
    """Uniform stride subsampling to at most ``max_samples`` points
    (stride = ceil(len / max_samples)); shorter series pass through."""
    arr = _as_signal(x)
    if arr.size <= max_samples:
        return arr
    stride = -(-arr.size // max_samples)
    return arr[::stride]


def aggregate_dtw(
    design: BodyDesign,
    policy: Policy,
    envset: EnvironmentSet,
    profile: SimProfile,
) -> float:
    """Mean pairwise DTW distance of sensor experience across environments.

    For each sensor, the (downsampled) traces from all K environments are
    compared over the K*(K-1)/2 unordered pairs and averaged; the two
    per-sensor scores are then averaged. Low values mean the design
    experiences nominally different environments similarly."""
    if len(envset) < 2:
        raise ValueError("aggregate DTW needs at least two environments")
    trials = evaluate_all(design, policy, envset, profile)
    score = 0.0
    for traces in (
        [t.sensor_trace_1 for t in trials],
        [t.sensor_trace_2 for t in trials],
    ):
        sampled = [downsample(tr) for tr in traces]
        pair_costs = [
            dtw(sampled[i], sampled[j])
            for i, j in itertools.combinations(range(len(sampled)), 2)
        ]
        score += sum(pair_costs) / len(pair_costs)
    return score / 2.0


# --- regularized incomplete beta (for the t-distribution tail) ---

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t with ``df`` degrees."""
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def pearson(x, y) -> StatResult:
    """Sample correlation with its two-sided p from the t distribution."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    n = xa.size
    if n < 3:
        raise ValueError("need at least 3 paired samples")
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    sx = math.sqrt(float(xd @ xd))
    sy = math.sqrt(float(yd @ yd))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance in a series")
    r = float(xd @ yd) / (sx * sy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = _t_sf_two_sided(t, n - 2)
    return StatResult(statistic=r, p_value=min(1.0, p), n=n)


def _midranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranks (ties get the mean of their rank block)."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> StatResult:
    """Rank correlation: Pearson on midranks."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    return pearson(_midranks(xa), _midranks(ya))


def _mwu_exact_two_sided(pooled_sorted_n: int, n1: int, u1: float) -> float:
    """Exact two-sided p by enumerating all assignments of pooled ranks."""
    total = 0
    at_most = 0
    at_least = 0
    base = n1 * (n1 + 1) / 2.0
    for combo in itertools.combinations(range(pooled_sorted_n), n1):
        u = sum(combo) + n1 - base  # ranks are positions+1
        total += 1
        if u <= u1:
            at_most += 1
        if u >= u1:
            at_least += 1
    return min(1.0, 2.0 * min(at_most, at_least) / total)


def mann_whitney(a, b) -> StatResult:
    """Rank-sum test between two independent samples.

    The statistic is U for the first sample (count of (a, b) pairs with
    a > b, ties counted half). Small untied designs (n1 + n2 <= 16) get an
    exact two-sided p by full enumeration; otherwise a normal approximation
    with tie correction and continuity correction is used."""
    aa = np.asarray(a, dtype=np.float64)
    bb = np.asarray(b, dtype=np.float64)
    if aa.size == 0 or bb.size == 0:
        raise ValueError("both samples must be non-empty")
    n1, n2 = aa.size, bb.size
    pooled = np.concatenate([aa, bb])
    ranks = _midranks(pooled)
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1

    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool((tie_counts > 1).any())

    if not has_ties and n1 + n2 <= 16:
        p = _mwu_exact_two_sided(n1 + n2, n1, u1)
        return StatResult(statistic=u1, p_value=p, n=n1, n2=n2)

    nn = n1 + n2
    tie_term = float(((tie_counts ** 3) - tie_counts).sum()) / (nn * (nn - 1))
    sigma_sq = n1 * n2 / 12.0 * ((nn + 1) - tie_term)
    if sigma_sq <= 0.0:
        return StatResult(statistic=u1, p_value=1.0, n=n1, n2=n2)
    mu = n1 * n2 / 2.0
    z = max(0.0, abs(u1 - mu) - 0.5) / math.sqrt(sigma_sq)
    p = math.erfc(z / math.sqrt(2.0))
    return StatResult(statistic=u1, p_value=min(1.0, p), n=n1, n2=n2)


def bonferroni(p: float, comparisons: int) -> float:
    """Multiply-by-m correction, clamped to 1."""
    if comparisons < 1:
        raise ValueError("comparisons must be >= 1")
    return min(1.0, p * comparisons)


# --- lineage-based interference metrics ---

@dataclass(frozen=True)
class ChapterTwoMetrics:
    """Interference summary over a set of hill-climber runs.

    * ``m1``: mean (over runs) of the champion's worst-environment end
      distance -- high values mean no generalist evolved.
    * ``m2``: mean angle, in degrees, between accepted-mutation improvement
      vectors and the all-ones direction -- low angles mean improvements
      were shared across environments.
    * ``m3``: mean length of those improvement vectors (improvement size).
    * ``m4``: fraction of improvement vectors with all components positive
      (no environment degraded).
    """

    m1: float
    m2: float
    m3: float
    m4: float
    runs: int
    runs_with_mutations: int


def improvement_angle_deg(delta: np.ndarray) -> float:
    """Angle in degrees between an improvement vector and the all-ones
    direction (the perfectly shared improvement)."""
    d = np.asarray(delta, dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ValueError("zero improvement vector has no direction")
    cos = float(d.sum()) / (norm * math.sqrt(d.size))
    cos = max(-1.0, min(1.0, cos))
    return math.degrees(math.acos(cos))


def chapter_two_metrics(logs, k: int) -> ChapterTwoMetrics:
    """Aggregate interference metrics from hill-climber lineage logs.

    ``logs`` is a sequence of :class:`morpho.optimizers.LineageLog`. Each
    run contributes its champion climber (the final individual whose worst
    environment distance is lowest; ties take the lowest climber index).
    Runs whose champion accepted no mutations still count for ``m1`` but
    are skipped for ``m2``..``m4``."""
    if not logs:
        raise ValueError("need at least one lineage log")
    worsts = []
    angles = []
    lengths = []
    fractions = []
    for log in logs:
        finals = np.asarray(log.final_distances, dtype=np.float64)
        if finals.ndim != 2 or finals.shape[1] != k:
            raise ValueError(f"final distances must be (pop, {k})")
        champion = int(np.argmin(finals.max(axis=1)))
        worsts.append(float(finals[champion].max()))
        events = [e for e in log.events if e.climber == champion]
        if not events:
            continue
        run_angles = []
        run_lengths = []
        positives = 0
        for e in events:
            delta = np.asarray(e.delta, dtype=np.float64)
            run_angles.append(improvement_angle_deg(delta))
            run_lengths.append(float(np.linalg.norm(delta)))
            if bool((delta > 0).all()):
                positives += 1
        mean_angle = sum(run_angles) / len(run_angles)
        # arccos means cannot exceed 180; the reflected branch is kept for
        # completeness but is unreachable.
        if mean_angle > 180.0:
            mean_angle = abs(mean_angle - 360.0)
        angles.append(mean_angle)
        lengths.append(sum(run_lengths) / len(run_lengths))
        fractions.append(positives / len(events))
    return ChapterTwoMetrics(
        m1=sum(worsts) / len(worsts),
        m2=sum(angles) / len(angles) if angles else float("nan"),
        m3=sum(lengths) / len(lengths) if lengths else float("nan"),
        m4=sum(fractions) / len(fractions) if fractions else float("nan"),
        runs=len(logs),
        runs_with_mutations=len(angles),
    )
