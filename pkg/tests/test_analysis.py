"""DTW, statistics, and lineage-metric contracts, each checked against an
independent oracle (exhaustive path enumeration, quadrature, enumeration of
labelings, or hand arithmetic)."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from morpho.analysis import (
    ChapterTwoMetrics,
    bonferroni,
    chapter_two_metrics,
    downsample,
    dtw,
    aggregate_dtw,
    improvement_angle_deg,
    mann_whitney,
    pearson,
    regularized_incomplete_beta,
    spearman,
)
from morpho.optimizers import LineageLog, MutationEvent
from morpho.sim import BodyDesign, Policy, SimProfile, default_environment_set


def dtw_oracle(a, b) -> float:
    """Minimum alignment cost by exhaustive enumeration of warping paths."""
    n, m = len(a), len(b)
    best = [math.inf]

    def walk(i, j, cost):
        cost += abs(a[i] - b[j])
        if cost >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = cost
            return
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best[0]


class TestDtw:
    def test_identical_signals_cost_zero(self, rng):
        x = rng.uniform(0, 1, 25)
        assert dtw(x, x) == 0.0

    def test_single_pair(self):
        assert dtw([0.0], [5.0]) == 5.0

    def test_stretch_alignment(self):
        assert dtw([0, 0, 1], [0, 1]) == 0.0

    def test_symmetry_and_diagonal_bound(self, rng):
        for _ in range(25):
            a = rng.uniform(0, 2, int(rng.integers(1, 12)))
            b = rng.uniform(0, 2, int(rng.integers(1, 12)))
            assert dtw(a, b) == dtw(b, a)
            assert dtw(a, b) >= 0.0
        for _ in range(10):
            a = rng.uniform(0, 2, 8)
            b = rng.uniform(0, 2, 8)
            assert dtw(a, b) <= np.abs(a - b).sum() + 1e-12

    def test_oracle_small_signals(self, rng):
        # sampled pairs of short {0,1,2}-valued signals vs exhaustive
        # enumeration of warping paths
        for _ in range(300):
            a = rng.integers(0, 3, int(rng.integers(1, 8))).astype(float)
            b = rng.integers(0, 3, int(rng.integers(1, 8))).astype(float)
            assert dtw(a, b) == pytest.approx(dtw_oracle(a, b), abs=1e-12)

    def test_empty_signal_rejected(self):
        with pytest.raises(ValueError):
            dtw([], [1.0])
        with pytest.raises(ValueError):
            dtw([1.0], [])


class TestDownsample:
    def test_short_series_passes_through(self):
        x = np.arange(100.0)
        np.testing.assert_array_equal(downsample(x, 500), x)

    def test_stride_bound(self):
        x = np.arange(20001.0)
        y = downsample(x, 500)
        assert len(y) <= 500
        assert y[0] == 0.0
        np.testing.assert_array_equal(y, x[::41])


class TestAggregateDtw:
    def test_pair_count_and_order_invariance(self, envset, short_profile):
        design = BodyDesign((0.3, 0.4), (-0.2, -0.5))
        policy = Policy(0.7, -0.2)
        score = aggregate_dtw(design, policy, envset, short_profile)
        assert score >= 0.0
        # order invariance: permute environments
        envs = list(envset)
        from morpho.sim import EnvironmentSet
        shuffled = EnvironmentSet((envs[2], envs[0], envs[3], envs[1]))
        assert aggregate_dtw(design, policy, shuffled, short_profile) == \
            pytest.approx(score, rel=1e-12)

    def test_six_comparisons_for_four_environments(self, envset):
        assert len(list(itertools.combinations(range(len(envset)), 2))) == 6

    def test_identical_experience_scores_zero(self, short_profile):
        # A robot that never moves senses each environment identically if
        # all starts are rotations... instead use a single duplicated env.
        from morpho.sim import Environment, EnvironmentSet, Pose
        env = Environment(Pose(2.0, 2.0, 0.0))
        pair = EnvironmentSet((env, env))
        score = aggregate_dtw(BodyDesign((0.1, 0.2), (0.3, -0.4)),
                              Policy(0.5, 0.25), pair, short_profile)
        assert score == 0.0

    def test_needs_two_environments(self, short_profile):
        single = default_environment_set(count=1)
        with pytest.raises(ValueError):
            aggregate_dtw(BodyDesign((0, 0), (0, 0)), Policy(0, 0),
                          single, short_profile)


class TestIncompleteBeta:
    def test_against_quadrature(self):
        for a, b in [(0.5, 0.5), (1.0, 3.0), (2.5, 0.5), (5.0, 7.0), (0.5, 9.5)]:
            norm = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))
            for x in (0.01, 0.2, 0.5, 0.8, 0.99):
                want, _ = quad(lambda t: norm * t ** (a - 1) * (1 - t) ** (b - 1),
                               0.0, x, limit=200)
                got = regularized_incomplete_beta(a, b, x)
                assert got == pytest.approx(want, abs=1e-8)

    def test_endpoints(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0


def t_pvalue_oracle(t: float, df: int) -> float:
    """Two-sided tail of Student's t by numeric integration of its density."""
    norm = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / \
        math.sqrt(df * math.pi)

    def pdf(u):
        return norm * (1 + u * u / df) ** (-(df + 1) / 2)

    tail, _ = quad(pdf, abs(t), math.inf, limit=300)
    return 2.0 * tail


class TestPearson:
    def test_exact_linear(self):
        assert pearson([1, 2, 3], [2, 4, 6]).statistic == pytest.approx(1.0)
        assert pearson([1, 2, 3], [-1, -2, -3]).statistic == pytest.approx(-1.0)

    def test_hand_case_r_and_p(self):
        res = pearson([1, 2, 3], [1, 3, 2])
        assert res.statistic == pytest.approx(0.5)
        assert res.p_value == pytest.approx(2 / 3, abs=1e-9)

    def test_p_against_quadrature(self, rng):
        for n in (5, 8, 30):
            x = rng.normal(size=n)
            y = rng.normal(size=n) + 0.5 * x
            res = pearson(x, y)
            r = res.statistic
            t = r * math.sqrt((n - 2) / (1 - r * r))
            assert res.p_value == pytest.approx(t_pvalue_oracle(t, n - 2), abs=1e-6)

    def test_affine_invariance(self, rng):
        x = rng.normal(size=20)
        y = rng.normal(size=20)
        base = pearson(x, y)
        scaled = pearson(3.5 * x + 2.0, 0.25 * y - 7.0)
        assert scaled.statistic == pytest.approx(base.statistic, abs=1e-12)
        assert scaled.p_value == pytest.approx(base.p_value, abs=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            pearson([1, 2], [3, 4])


class TestSpearman:
    def test_monotone_transform_gives_unity(self):
        x = [1.0, 2.0, 5.0, 9.0]
        y = [math.exp(v) for v in x]
        assert spearman(x, y).statistic == pytest.approx(1.0)

    def test_reversed_gives_minus_one(self):
        x = [1.0, 2.0, 3.0, 4.0]
        assert spearman(x, x[::-1]).statistic == pytest.approx(-1.0)


def mwu_exact_oracle(a, b) -> tuple[float, float]:
    """U for sample a and the exact two-sided p by enumerating labelings."""
    pooled = sorted(list(a) + list(b))
    n1, n2 = len(a), len(b)
    assert len(set(pooled)) == len(pooled), "oracle assumes no ties"

    def u_of(sample):
        return sum(1 for x in sample for y_ in b if False)  # unused

    ua = sum(1 for x in a for y in b if x > y)
    count_le = 0
    count_ge = 0
    total = 0
    for combo in itertools.combinations(range(n1 + n2), n1):
        sa = [pooled[i] for i in combo]
        sb = [pooled[i] for i in range(n1 + n2) if i not in combo]
        u = sum(1 for x in sa for y in sb if x > y)
        total += 1
        count_le += u <= ua
        count_ge += u >= ua
    p = min(1.0, 2.0 * min(count_le, count_ge) / total)
    return float(ua), p


class TestMannWhitney:
    def test_separated_samples(self):
        res = mann_whitney([1, 2], [3, 4])
        assert res.statistic == 0.0
        assert res.p_value == pytest.approx(1 / 3, abs=1e-12)

    def test_u_identity(self, rng):
        for _ in range(30):
            a = rng.normal(size=int(rng.integers(1, 8)))
            b = rng.normal(size=int(rng.integers(1, 8)))
            u1 = mann_whitney(a, b).statistic
            u2 = mann_whitney(b, a).statistic
            assert u1 + u2 == pytest.approx(len(a) * len(b))

    def test_identical_samples_p_one(self):
        res = mann_whitney([3, 1, 4, 1, 5], [3, 1, 4, 1, 5])
        assert res.p_value == pytest.approx(1.0)

    def test_interleaved_samples_not_significant(self):
        res = mann_whitney([1, 3, 5], [2, 4, 6])
        assert res.p_value > 0.5

    def test_exact_matches_enumeration(self, rng):
        # every no-tie case with n1 + n2 <= 10 is enumeration-exact; sample
        # dozens of such cases
        for _ in range(60):
            n1 = int(rng.integers(1, 6))
            n2 = int(rng.integers(1, 11 - n1))
            pool = rng.permutation(100)[: n1 + n2].astype(float)
            a, b = pool[:n1], pool[n1:]
            res = mann_whitney(a, b)
            want_u, want_p = mwu_exact_oracle(a, b)
            assert res.statistic == pytest.approx(want_u)
            assert res.p_value == pytest.approx(want_p, abs=1e-12)

    def test_large_samples_use_normal_approximation(self, rng):
        a = rng.normal(0, 1, 40)
        b = rng.normal(1.0, 1, 40)
        res = mann_whitney(a, b)
        assert res.p_value < 0.01

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney([], [1.0])


class TestBonferroni:
    def test_multiplies_and_clamps(self):
        assert bonferroni(0.01, 3) == pytest.approx(0.03)
        assert bonferroni(0.4, 18) == 1.0


def _log(final_distances, events, k=4, pop=None):
    pop = pop if pop is not None else len(final_distances)
    return LineageLog(
        kind="sum", pop=pop, generations=1, mutation_scale=0.05, seed=0, k=k,
        initial_distances=tuple(tuple(r) for r in final_distances),
        initial_fitness=tuple(0.0 for _ in final_distances),
        final_distances=tuple(tuple(r) for r in final_distances),
        final_fitness=tuple(0.0 for _ in final_distances),
        events=tuple(events),
    )


def _event(climber, parent, child):
    parent = np.asarray(parent, float)
    child = np.asarray(child, float)
    return MutationEvent(
        climber=climber, generation=1,
        parent_distances=tuple(parent), child_distances=tuple(child),
        delta=tuple(-(child - parent)),
        fitness_before=0.0, fitness_after=1.0,
    )


class TestChapterTwoMetrics:
    def test_angle_values(self):
        assert improvement_angle_deg([1, 1, 1, 1]) == pytest.approx(0.0)
        assert improvement_angle_deg([1, 0, 0, 0]) == pytest.approx(60.0)

    def test_delta_negation_logged(self):
        e = _event(0, parent=[5, 5], child=[3, 6])
        assert e.delta == (2.0, -1.0)

    def test_m3_m4_hand_values(self):
        deltas = [(1, 1), (1, -1), (2, 3)]
        events = []
        for d in deltas:
            parent = np.array([5.0, 5.0])
            child = parent - np.asarray(d, float)
            events.append(_event(0, parent, child))
        log = _log([[1.0, 2.0]], events, k=2)
        res = chapter_two_metrics([log], k=2)
        assert res.m4 == pytest.approx(2 / 3)
        want_m3 = (math.sqrt(2) + math.sqrt(2) + math.sqrt(13)) / 3
        assert res.m3 == pytest.approx(want_m3, abs=1e-4)
        assert want_m3 == pytest.approx(2.1446, abs=1e-4)

    def test_champion_is_best_worst_environment(self):
        finals = [[3.0, 9.0], [4.0, 5.0], [6.0, 2.0]]  # worsts: 9, 5, 6
        log = _log(finals, [_event(1, [6.0, 6.0], [4.0, 5.0])], k=2)
        res = chapter_two_metrics([log], k=2)
        assert res.m1 == pytest.approx(5.0)

    def test_runs_without_mutations_skip_m2_to_m4(self):
        with_events = _log([[1.0, 1.0]], [_event(0, [2, 2], [1, 1])], k=2)
        without = _log([[4.0, 4.0]], [], k=2)
        res = chapter_two_metrics([with_events, without], k=2)
        assert res.runs == 2
        assert res.runs_with_mutations == 1
        assert res.m1 == pytest.approx((1.0 + 4.0) / 2)
        assert res.m2 == pytest.approx(0.0, abs=1e-5)

    def test_m2_within_arccos_range(self, rng):
        events = [_event(0, rng.uniform(1, 9, 4), rng.uniform(1, 9, 4))
                  for _ in range(20)]
        log = _log([[1.0] * 4], events, k=4)
        res = chapter_two_metrics([log], k=4)
        assert 0.0 <= res.m2 <= 180.0
