"""Deterministic point-robot phototaxis simulation.

The robot is a square-framed differential-drive vehicle with two light
sensors mounted on its dorsal surface at body-frame offsets ``l1`` and
``l2`` (coordinates in [-0.5, 0.5]). The light source sits at the world
origin and each sensor reads intensity 1/d^2 by the inverse-square law.
Two synaptic weights drive the wheels contralaterally:

    speed        v = (w1*s1 + w2*s2) / 2
    turn rate    da/dt = w1*s1 - w2*s2

Poses are integrated with fixed-step explicit Euler. A trial succeeds when
the robot's center trajectory comes within ``success_radius`` of the origin;
the closest approach is measured per line segment between consecutive
positions so fast crossings near the source cannot tunnel through the
success region between samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import simulate_kernel, env_batch_kernel

__all__ = [
    "BodyDesign",
    "Policy",
    "Pose",
    "Environment",
    "EnvironmentSet",
    "SimProfile",
    "TrialResult",
    "CANONICAL_DESIGN",
    "START_DISTANCE",
    "PROFILES",
    "sensor_world_position",
    "sensor_value",
    "step",
    "simulate",
    "evaluate_all",
    "trial_distances",
    "default_environment_set",
]

# Start corner coordinate: corners (+-d, +-d) all lie 4 body lengths from
# the light source.
START_DISTANCE = 4.0 / math.sqrt(2.0)


def _check_offset(name: str, value) -> tuple[float, float]:
    x, y = float(value[0]), float(value[1])
    if not (-0.5 <= x <= 0.5 and -0.5 <= y <= 0.5):
        raise ValueError(f"{name} must lie within [-0.5, 0.5]^2, got ({x}, {y})")
    return x, y


@dataclass(frozen=True)
class BodyDesign:
    """Sensor placement: two body-frame offsets on the dorsal surface."""

    l1: tuple[float, float]
    l2: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "l1", _check_offset("l1", self.l1))
        object.__setattr__(self, "l2", _check_offset("l2", self.l2))

    def as_array(self) -> np.ndarray:
        return np.array([*self.l1, *self.l2], dtype=np.float64)


@dataclass(frozen=True)
class Policy:
    """Controller: two synapse weights in [-1, 1]."""

    w1: float
    w2: float

    def __post_init__(self):
        object.__setattr__(self, "w1", float(self.w1))
        object.__setattr__(self, "w2", float(self.w2))
        if not (-1.0 <= self.w1 <= 1.0 and -1.0 <= self.w2 <= 1.0):
            raise ValueError(f"weights must lie in [-1, 1], got ({self.w1}, {self.w2})")


@dataclass(frozen=True)
class Pose:
    """Planar pose: position and unwrapped heading (radians, 0 = +x)."""

    x: float
    y: float
    alpha: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "alpha"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"pose field {name} must be finite")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class Environment:
    """One task instance: a start pose relative to the light at the origin."""

    start: Pose


@dataclass(frozen=True)
class EnvironmentSet:
    """Fixed, index-stable ordered collection of environments."""

    environments: tuple[Environment, ...]

    def __post_init__(self):
        envs = tuple(self.environments)
        if not envs:
            raise ValueError("environment set must hold at least one environment")
        object.__setattr__(self, "environments", envs)

    def __len__(self) -> int:
        return len(self.environments)

    def __iter__(self):
        return iter(self.environments)

    def start_array(self) -> np.ndarray:
        """(K, 3) array of (x, y, heading) start rows."""
        return np.array(
            [(e.start.x, e.start.y, e.start.alpha) for e in self.environments],
            dtype=np.float64,
        )

    def validate_against(self, profile: "SimProfile") -> None:
        """Reject start positions at or inside the success radius."""
        for i, env in enumerate(self.environments):
            d = math.hypot(env.start.x, env.start.y)
            if d <= profile.success_radius:
                raise ValueError(
                    f"environment {i} starts at distance {d:.6g}, inside the "
                    f"success radius {profile.success_radius}"
                )


def default_environment_set(
    distance: float = START_DISTANCE,
    count: int = 4,
    headings=None,
) -> EnvironmentSet:
    """The standard task suite: starts at the corners (+-d, +-d), facing +x.

    ``count`` takes a prefix of the fixed corner order
    (d, d), (d, -d), (-d, d), (-d, -d); headings default to 0.
    """
    corners = [(distance, distance), (distance, -distance),
               (-distance, distance), (-distance, -distance)]
    if not 1 <= count <= len(corners):
        raise ValueError(f"count must be in 1..{len(corners)}, got {count}")
    if headings is None:
        headings = [0.0] * count
    if len(headings) != count:
        raise ValueError(f"expected {count} headings, got {len(headings)}")
    envs = [Environment(Pose(x, y, a)) for (x, y), a in zip(corners[:count], headings)]
    return EnvironmentSet(tuple(envs))


@dataclass(frozen=True)
class SimProfile:
    """Integration settings: step size, horizon, and geometry constants."""

    dt: float
    steps: int
    success_radius: float = 0.075
    sensor_floor: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 < self.sensor_floor < self.success_radius:
            raise ValueError("need 0 < sensor_floor < success_radius")


# "full" matches the published long-horizon run; "desk" is the default for
# sweeps and training experiments.
PROFILES: dict[str, SimProfile] = {
    "full": SimProfile(dt=0.1, steps=100_000),
    "desk": SimProfile(dt=0.1, steps=20_000),
}

CANONICAL_DESIGN = BodyDesign(l1=(0.5, 0.5), l2=(0.5, -0.5))


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one trial in one environment.

    ``min_distance`` is the segment-based closest approach of the center
    trajectory to the origin; ``success`` holds iff it is within the success
    radius. Sensor traces carry one sample per visited pose
    (``steps_used + 1`` samples, the first taken at the start pose).
    """

    success: bool
    min_distance: float
    steps_used: int
    sensor_trace_1: np.ndarray
    sensor_trace_2: np.ndarray
    end_distance: float = field(default=float("nan"))


def sensor_world_position(pose: Pose, offset) -> np.ndarray:
    """World coordinates of a body-frame offset: (x, y) + R(alpha) @ offset."""
    ox, oy = float(offset[0]), float(offset[1])
    ca = math.cos(pose.alpha)
    sa = math.sin(pose.alpha)
    return np.array([pose.x + ca * ox - sa * oy,
                     pose.y + sa * ox + ca * oy])


def sensor_value(pose: Pose, offset, floor: float) -> float:
    """Inverse-square light intensity at a sensor, distance floored at `floor`."""
    if floor <= 0:
        raise ValueError("sensor floor must be positive")
    sx, sy = sensor_world_position(pose, offset)
    d_sq = max(sx * sx + sy * sy, floor * floor)
    return 1.0 / d_sq


def step(pose: Pose, design: BodyDesign, policy: Policy, dt: float, floor: float) -> Pose:
    """One explicit-Euler update.

    Position is advanced using the heading *before* the update; the heading
    is then advanced with the same sensor readings. This ordering is part of
    the contract and matches the compiled rollout bit for bit in exact
    arithmetic.
    """
    s1 = sensor_value(pose, design.l1, floor)
    s2 = sensor_value(pose, design.l2, floor)
    v = 0.5 * (policy.w1 * s1 + policy.w2 * s2)
    x = pose.x + v * math.cos(pose.alpha) * dt
    y = pose.y + v * math.sin(pose.alpha) * dt
    alpha = pose.alpha + (policy.w1 * s1 - policy.w2 * s2) * dt
    return Pose(x, y, alpha)


def simulate(
    design: BodyDesign,
    policy: Policy,
    env: Environment,
    profile: SimProfile,
    *,
    stop_on_success: bool = True,
    record_trace: bool = True,
) -> TrialResult:
    """Integrate one trial from ``env.start`` and report the outcome.

    Terminates at the first step whose trajectory segment enters the success
    radius (unless ``stop_on_success`` is false, e.g. for end-of-trial
    fitness measurements, in which case the full horizon is integrated and
    ``success`` still reflects whether the radius was ever reached).
    """
    if record_trace:
        trace1 = np.empty(profile.steps + 1, dtype=np.float64)
        trace2 = np.empty(profile.steps + 1, dtype=np.float64)
    else:
        trace1 = np.empty(0, dtype=np.float64)
        trace2 = np.empty(0, dtype=np.float64)
    min_d, end_d, used, ok = simulate_kernel(
        design.l1[0], design.l1[1], design.l2[0], design.l2[1],
        policy.w1, policy.w2,
        env.start.x, env.start.y, env.start.alpha,
        profile.dt, profile.steps,
        profile.success_radius, profile.sensor_floor ** 2,
        stop_on_success,
        trace1, trace2, record_trace,
    )
    return TrialResult(
        success=bool(ok),
        min_distance=float(min_d),
        steps_used=int(used),
        sensor_trace_1=trace1[: used + 1],
        sensor_trace_2=trace2[: used + 1],
        end_distance=float(end_d),
    )


def evaluate_all(
    design: BodyDesign,
    policy: Policy,
    envset: EnvironmentSet,
    profile: SimProfile,
    **kwargs,
) -> list[TrialResult]:
    """Independent trials across the environment set, in set order."""
    return [simulate(design, policy, env, profile, **kwargs) for env in envset]


def trial_distances(
    design: BodyDesign,
    policy: Policy,
    starts: np.ndarray,
    profile: SimProfile,
    *,
    stop_on_success: bool = True,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Fast path for optimizers: per-environment (min, end) distances.

    ``starts`` is the (K, 3) array from :meth:`EnvironmentSet.start_array`.
    Returns (min_distances, end_distances, environments_solved) without
    building per-trial result objects or traces.
    """
    k = starts.shape[0]
    min_out = np.empty(k, dtype=np.float64)
    end_out = np.empty(k, dtype=np.float64)
    solved = env_batch_kernel(
        design.l1[0], design.l1[1], design.l2[0], design.l2[1],
        policy.w1, policy.w2,
        starts,
        profile.dt, profile.steps,
        profile.success_radius, profile.sensor_floor ** 2,
        stop_on_success,
        min_out, end_out,
    )
    return min_out, end_out, int(solved)
