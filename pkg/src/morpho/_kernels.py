"""Compiled inner loops for the phototaxis simulation and DTW.

Everything here is deterministic scalar arithmetic: given identical inputs the
kernels produce bit-identical outputs regardless of process, thread, or call
order. The public API lives in :mod:`morpho.sim` and :mod:`morpho.analysis`;
these functions are the hot paths behind it.

The kernels deliberately avoid fastmath: strict IEEE semantics make every
call path (scalar, per-environment batch, weight-grid batch) produce the
same bits for the same trajectory even after LLVM inlining, and keep
trajectories exactly antisymmetric under sign flips of the inputs (the
basis of the mirror-symmetry guarantees).
"""

import math

import numpy as np
from numba import njit

@njit(cache=True)
def simulate_kernel(
    l1x, l1y, l2x, l2y,
    w1, w2,
    x0, y0, a0,
    dt, steps, success_radius, floor_sq,
    stop_on_success,
    trace1, trace2, record,
):
    """Explicit-Euler rollout of the two-sensor vehicle.

    State update per step, in this exact order: sensor intensities at the
    current pose, forward speed v = (w1*s1 + w2*s2)/2, position advanced
    along the current heading, then heading advanced by (w1*s1 - w2*s2)*dt.

    The closest approach to the origin is tracked per line segment between
    consecutive positions, so a step that overshoots the target still

    registers the crossing. Sensor distances are floored at sqrt(floor_sq)
    before inversion.

    Returns (min_distance, end_distance, steps_used, success). When `record`
    is true, trace1/trace2 must have length >= steps+1 and receive one sensor
    sample per visited pose (steps_used + 1 samples).
    """
    px = x0
    py = y0
    pa = a0
    d_sq = px * px + py * py
    min_sq = d_sq
    min_d = math.sqrt(d_sq)
    r_sq = success_radius * success_radius

    ca = math.cos(pa)
    sa = math.sin(pa)
    sx = px + ca * l1x - sa * l1y
    sy = py + sa * l1x + ca * l1y
    q1 = sx * sx + sy * sy
    if q1 < floor_sq:
        q1 = floor_sq
    tx = px + ca * l2x - sa * l2y
    ty = py + sa * l2x + ca * l2y
    q2 = tx * tx + ty * ty
    if q2 < floor_sq:
        q2 = floor_sq
    s1 = 1.0 / q1
    s2 = 1.0 / q2
    if record:
        trace1[0] = s1
        trace2[0] = s2

    used = 0
    if stop_on_success and min_sq <= r_sq:
        return min_d, min_d, 0, True

    for k in range(steps):
        v = 0.5 * (w1 * s1 + w2 * s2)
        nx = px + v * ca * dt
        ny = py + v * sa * dt
        na = pa + (w1 * s1 - w2 * s2) * dt

        # Segment-based closest approach. The segment from (px,py) to
        # (nx,ny) can only improve the running minimum if one endpoint is
        # within (min_d + segment length); everything else is skipped.
        n_sq = nx * nx + ny * ny
        seg_len = abs(v) * dt
        lim = min_d + seg_len
        lim_sq = lim * lim
        if d_sq <= lim_sq or n_sq <= lim_sq:
            cand = d_sq if d_sq < n_sq else n_sq
            dx = nx - px
            dy = ny - py
            ll = dx * dx + dy * dy
            if ll > 0.0:
                t = -(px * dx + py * dy) / ll
                if 0.0 < t < 1.0:
                    cx = px + t * dx
                    cy = py + t * dy
                    p_sq = cx * cx + cy * cy
                    if p_sq < cand:
                        cand = p_sq
            if cand < min_sq:
                min_sq = cand
                min_d = math.sqrt(cand)

        px = nx
        py = ny
        pa = na
        d_sq = n_sq
        used = k + 1

        ca = math.cos(pa)
        sa = math.sin(pa)
        sx = px + ca * l1x - sa * l1y
        sy = py + sa * l1x + ca * l1y
        q1 = sx * sx + sy * sy
        if q1 < floor_sq:
            q1 = floor_sq
        tx = px + ca * l2x - sa * l2y
        ty = py + sa * l2x + ca * l2y
        q2 = tx * tx + ty * ty
        if q2 < floor_sq:
            q2 = floor_sq
        s1 = 1.0 / q1
        s2 = 1.0 / q2
        if record:
            trace1[used] = s1
            trace2[used] = s2

        if stop_on_success and min_sq <= r_sq:
            return min_d, math.sqrt(d_sq), used, True

    return min_d, math.sqrt(d_sq), used, min_sq <= r_sq


_NO_TRACE = np.empty(0, dtype=np.float64)


@njit(cache=True)
def env_batch_kernel(
    l1x, l1y, l2x, l2y,
    w1, w2,
    starts,
    dt, steps, success_radius, floor_sq,
    stop_on_success,
    min_out, end_out,
):
    """Run one policy across all environments; fill per-env min/end distances.

    `starts` is a (K, 3) array of (x, y, heading) rows. Returns the number of
    environments in which the trajectory reached the success radius.
    """
    empty = np.empty(0, dtype=np.float64)
    solved = 0
    for k in range(starts.shape[0]):
        min_d, end_d, _, ok = simulate_kernel(
            l1x, l1y, l2x, l2y, w1, w2,
            starts[k, 0], starts[k, 1], starts[k, 2],
            dt, steps, success_radius, floor_sq,
            stop_on_success, empty, empty, False,
        )
        min_out[k] = min_d
        end_out[k] = end_d
        if ok:
            solved += 1
    return solved


@njit(cache=True)
def success_grid_kernel(
    l1x, l1y, l2x, l2y,
    x0, y0, a0,
    values,
    dt, steps, success_radius, floor_sq,
    out,
):
    """Fill out[i, j] with the success bit for policy (values[i], values[j])."""
    empty = np.empty(0, dtype=np.float64)
    n = values.shape[0]
    for i in range(n):
        w1 = values[i]
        for j in range(n):
            _, _, _, ok = simulate_kernel(
                l1x, l1y, l2x, l2y, w1, values[j],
                x0, y0, a0,
                dt, steps, success_radius, floor_sq,
                True, empty, empty, False,
            )
            out[i, j] = 1 if ok else 0


@njit(cache=True)
def dtw_kernel(a, b):
    """Alignment cost between two series: absolute-difference local cost,
    steps (i-1,j), (i,j-1), (i-1,j-1), both endpoints anchored."""
    n = a.shape[0]
    m = b.shape[0]
    prev = np.empty(m, dtype=np.float64)
    cur = np.empty(m, dtype=np.float64)
    prev[0] = abs(a[0] - b[0])
    for j in range(1, m):
        prev[j] = prev[j - 1] + abs(a[0] - b[j])
    for i in range(1, n):
        cur[0] = prev[0] + abs(a[i] - b[0])
        for j in range(1, m):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = best + abs(a[i] - b[j])
        prev, cur = cur, prev
    return prev[m - 1]


def warm_up():
    """Force compilation of all kernels (first call per process)."""
    t = np.zeros(4, dtype=np.float64)
    simulate_kernel(0.5, 0.5, 0.5, -0.5, 0.1, 0.2, 2.0, 2.0, 0.0,
                    0.1, 3, 0.075, 1e-6, True, t, t.copy(), True)
    starts = np.array([[2.0, 2.0, 0.0]], dtype=np.float64)
    mo = np.empty(1)
    eo = np.empty(1)
    env_batch_kernel(0.5, 0.5, 0.5, -0.5, 0.1, 0.2, starts,
                     0.1, 3, 0.075, 1e-6, True, mo, eo)
    grid = np.zeros((2, 2), dtype=np.uint8)
    success_grid_kernel(0.5, 0.5, 0.5, -0.5, 2.0, 2.0, 0.0,
                        np.array([-1.0, 1.0]), 0.1, 3, 0.075, 1e-6, grid)
    dtw_kernel(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
