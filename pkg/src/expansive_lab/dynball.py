"""Dynamic-ball membership.

Map-level balls compare iterates of a homeomorphism; flow-level balls decide
whether two trajectories can be matched within delta by a monotone time
change, via a monotone lattice path through the free-space grid of their
samples.  The path must cover the x-axis completely (every x-time is
matched), pass through the cell pairing t=0 with h(0)=0, and may cover the
y-axis partially.  A brute-force path search provides an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .core import InvalidArgument, Reparameterization, UnsupportedQuery
from .flows import CircleRotationFlow, TimeTMap, time_T_map
from .suspension import SuspensionFlow

ORACLE_GRID_CAP = 8


@dataclass(frozen=True)
class BallQuery:
    """Resolution of a ball query: radius, time horizon, and grid step."""

    delta: float
    horizon: float
    grid_step: float
    metric_override: object = None

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidArgument("delta must be positive")
        if self.horizon <= 0 or self.grid_step <= 0:
            raise InvalidArgument("horizon and grid_step must be positive")
        ratio = self.horizon / self.grid_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidArgument("grid_step must divide horizon")

    @property
    def n_half(self):
        return int(round(self.horizon / self.grid_step))

    @property
    def n_samples(self):
        return 2 * self.n_half + 1

    def times(self):
        return (np.arange(self.n_samples) - self.n_half) * self.grid_step

    def with_delta(self, delta):
        return replace(self, delta=delta)

    def scaled(self, horizon_factor=1.0, step_factor=1.0):
        return replace(self, horizon=self.horizon * horizon_factor,
                       grid_step=self.grid_step * step_factor)


def _check_floor(space, delta):
    floor = getattr(space, "resolution_floor", 0.0)
    if delta < floor:
        raise InvalidArgument(
            f"delta={delta} is below the space resolution floor {floor}")


# ---------------------------------------------------------------------------
# map-level balls
# ---------------------------------------------------------------------------

def map_ball_member(f, x, y, q, metric=None):
    """True when every iterate pair within the horizon stays delta-close."""
    N = int(round(q.horizon))
    if N < 1:
        raise InvalidArgument("map balls need an iterate count >= 1")
    dist = metric or q.metric_override
    if dist is None:
        _check_floor(f.space, q.delta)
        dist = f.space.distance
    if dist(x, y) > q.delta:
        return False
    fx, fy, bx, by = x, y, x, y
    for _ in range(N):
        fx, fy = f.forward(fx), f.forward(fy)
        if dist(fx, fy) > q.delta:
            return False
        bx, by = f.inverse(bx), f.inverse(by)
        if dist(bx, by) > q.delta:
            return False
    return True


def map_ball_members_packed(f, center, packed, q, metric=None):
    """Vectorized map-ball membership of packed points around one center."""
    N = int(round(q.horizon))
    if N < 1:
        raise InvalidArgument("map balls need an iterate count >= 1")
    if metric is None and q.metric_override is None:
        space = f.space
        from .flows import BinaryShiftMap, CircleRotationMap, ToralAutomorphism
        if isinstance(f, BinaryShiftMap):
            return np.asarray(kernels.map_ball_bits_batch(
                np.uint64(center.data), packed, N, q.delta, space.W, space.nbits))
        if isinstance(f, (CircleRotationMap, ToralAutomorphism)):
            ok = np.ones(packed.shape[0], dtype=bool)
            cur_c, cur_a = center.data.copy(), packed.copy()
            back_c, back_a = center.data.copy(), packed.copy()
            ok &= _arc_all(cur_c, cur_a) <= q.delta
            for _ in range(N):
                cur_c = f.forward(space.point(cur_c)).data
                cur_a = f.forward_packed(cur_a)
                ok &= _arc_all(cur_c, cur_a) <= q.delta
                back_c = f.inverse(space.point(back_c)).data
                back_a = f.inverse_packed(back_a)
                ok &= _arc_all(back_c, back_a) <= q.delta
            return ok
        if (isinstance(f, TimeTMap) and isinstance(f.flow, SuspensionFlow)
                and f.flow.space.is_bit_base
                and f.flow.space.height.const is not None):
            s = f.flow.space
            bases, fibs = packed
            return np.asarray(kernels.susp_map_ball_bits_batch(
                np.uint64(center.base.data), center.fiber, bases, fibs,
                f.T, N, s.height.const, q.delta, s.base_space.W,
                s.base_space.nbits))
    # generic slow path
    space = f.space
    n = len(packed[1]) if isinstance(packed, tuple) else packed.shape[0]
    out = np.zeros(n, dtype=bool)
    for i in range(n):
        y = space.unpack(packed, i)
        out[i] = map_ball_member(f, center, y, q, metric=metric)
    return out


def _arc_all(c, arr):
    t = np.abs(arr - c) % 1.0
    t = np.minimum(t, 1.0 - t)
    return t.max(axis=1) if arr.ndim > 1 else t


# ---------------------------------------------------------------------------
# flow-level balls
# ---------------------------------------------------------------------------

def flow_ball_member(flow, x, y, q):
    """Monotone-matching membership decided on the free-space grid."""
    _check_floor(flow.space, q.delta)
    i0 = q.n_half
    if q.metric_override is None:
        if isinstance(flow, CircleRotationFlow):
            times = q.times()
            xs = flow.sample_packed(x, times)
            ys = flow.sample_packed(y, times)
            return bool(kernels.flow_member_vec(xs, ys, i0, i0, q.delta))
        if isinstance(flow, SuspensionFlow):
            try:
                px = flow.traj_pack(x, q.horizon, q.grid_step)
                py = flow.traj_pack(y, q.horizon, q.grid_step)
            except UnsupportedQuery:
                px = None
            if px is not None:
                if px[0] == "bits":
                    s = flow.space.base_space
                    return bool(kernels.susp_member_bits(
                        px[1], px[2], px[3], py[1], py[2], py[3],
                        i0, i0, q.delta, s.W, s.nbits))
                return bool(kernels.susp_member_vec(
                    px[1], px[2], px[3], py[1], py[2], py[3], i0, i0, q.delta))
    M, i0, j0 = freespace_matrix(flow, x, y, q)
    return bool(kernels.dp_member_matrix(M, i0, j0))


def flow_ball_members_packed(flow, center, packed, q):
    """Membership of every packed point in the flow ball of one center.

    Prunes on the anchored cell (distance at t=0) before running the full
    dynamic program on the survivors.
    """
    _check_floor(flow.space, q.delta)
    i0 = q.n_half
    if isinstance(flow, CircleRotationFlow) and q.metric_override is None:
        times = q.times()
        xs = flow.sample_packed(center, times)
        anchor = _arc_all(center.data, packed) <= q.delta
        out = np.zeros(packed.shape[0], dtype=bool)
        for i in np.nonzero(anchor)[0]:
            ys = ((packed[i] + flow.omega * times) % 1.0).reshape(-1, 1)
            out[i] = bool(kernels.flow_member_vec(xs, ys, i0, i0, q.delta))
        return out
    if (isinstance(flow, SuspensionFlow) and q.metric_override is None
            and flow.space.height.const is not None):
        s = flow.space
        bases, fibs = packed
        unit_f = s.packed_unit_fibers(packed)
        cf = s.unit_fiber(center)
        if s.is_bit_base:
            W, nbits = s.base_space.W, s.base_space.nbits
            dists = np.asarray(kernels.bw_batch_bits(
                np.uint64(center.base.data), cf, bases, unit_f, W, nbits))
        else:
            c_blk = s.base_map.orbit_blocks(center.base.data.reshape(1, -1))[0]
            a_blk = s.orbit_blocks(packed)
            dists = np.asarray(kernels.bw_batch_vec(c_blk, 0, cf, a_blk, unit_f))
        anchor = dists <= q.delta
        out = np.zeros(len(fibs), dtype=bool)
        px = flow.traj_pack(center, q.horizon, q.grid_step)
        for i in np.nonzero(anchor)[0]:
            y = s.unpack(packed, i)
            py = flow.traj_pack(y, q.horizon, q.grid_step)
            if px[0] == "bits":
                out[i] = bool(kernels.susp_member_bits(
                    px[1], px[2], px[3], py[1], py[2], py[3],
                    i0, i0, q.delta, s.base_space.W, s.base_space.nbits))
            else:
                out[i] = bool(kernels.susp_member_vec(
                    px[1], px[2], px[3], py[1], py[2], py[3], i0, i0, q.delta))
        return out
    # generic
    space = flow.space
    n = len(packed[1]) if isinstance(packed, tuple) else packed.shape[0]
    out = np.zeros(n, dtype=bool)
    for i in range(n):
        out[i] = flow_ball_member(flow, center, space.unpack(packed, i), q)
    return out


def freespace_matrix(flow, x, y, q):
    """The boolean within-delta grid of trajectory sample pairs, materialized."""
    i0 = q.n_half
    n = q.n_samples
    times = q.times()
    if q.metric_override is None and isinstance(flow, SuspensionFlow):
        try:
            px = flow.traj_pack(x, q.horizon, q.grid_step)
            py = flow.traj_pack(y, q.horizon, q.grid_step)
        except UnsupportedQuery:
            px = None
        if px is not None:
            M = np.zeros((n, n), dtype=bool)
            s = flow.space.base_space
            for i in range(n):
                if px[0] == "bits":
                    row = kernels._bw_row_bits_np(
                        px[1][px[2][i]], px[3][i], py[1][py[2]], py[3],
                        s.W, s.nbits)
                else:
                    row = kernels._bw_row_vec_np(
                        px[1], px[2][i], px[3][i], py[1], py[2], py[3])
                M[i] = row <= q.delta
            return M, i0, i0
    if q.metric_override is None and isinstance(flow, CircleRotationFlow):
        xs = flow.sample_packed(x, times)
        ys = flow.sample_packed(y, times)
        t = np.abs(xs[:, None, :] - ys[None, :, :]) % 1.0
        t = np.minimum(t, 1.0 - t)
        M = t.max(axis=2) <= q.delta
        return M, i0, i0
    dist = q.metric_override or flow.distance
    sx = [flow.evaluate(t, x) for t in times]
    sy = [flow.evaluate(t, y) for t in times]
    M = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            M[i, j] = dist(sx[i], sy[j]) <= q.delta
    return M, i0, i0


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def bruteforce_matrix(M, i0, j0):
    """Depth-first enumeration of monotone lattice paths through M.

    Searches from the anchor toward both grid edges, memoizing cells whose
    every continuation fails; independent of the sweep-based decider.
    """
    M = np.asarray(M, dtype=bool)
    n, m = M.shape
    if not M[i0, j0]:
        return False
    memo_b = {}

    def back(i, j):
        if not M[i, j]:
            return False
        if i == 0:
            return True
        key = (i, j)
        if key in memo_b:
            return memo_b[key]
        r = back(i - 1, j)
        if not r and j > 0:
            r = back(i - 1, j - 1) or back(i, j - 1)
        memo_b[key] = r
        return r

    if not back(i0, j0):
        return False
    memo_f = {}

    def fwd(i, j):
        if not M[i, j]:
            return False
        if i == n - 1:
            return True
        key = (i, j)
        if key in memo_f:
            return memo_f[key]
        r = fwd(i + 1, j)
        if not r and j + 1 < m:
            r = fwd(i + 1, j + 1) or fwd(i, j + 1)
        memo_f[key] = r
        return r

    return fwd(i0, j0)


def flow_ball_member_bruteforce(flow, x, y, q):
    """Same contract as flow_ball_member, decided by exhaustive path search."""
    if q.n_half > ORACLE_GRID_CAP:
        raise UnsupportedQuery(
            f"oracle grids are capped at {ORACLE_GRID_CAP} cells per half-axis")
    _check_floor(flow.space, q.delta)
    M, i0, j0 = freespace_matrix(flow, x, y, q)
    return bruteforce_matrix(M, i0, j0)


# ---------------------------------------------------------------------------
# witness extraction and replay
# ---------------------------------------------------------------------------

def _forward_reach(M, i0, j0):
    # reach-from-start over rows 0..i0, cols 0..j0
    R = np.zeros_like(M)
    R[0, : j0 + 1] = M[0, : j0 + 1]
    for i in range(1, i0 + 1):
        row = np.zeros(j0 + 1, dtype=bool)
        left = False
        for j in range(j0 + 1):
            if M[i, j]:
                diag = R[i - 1, j - 1] if j > 0 else False
                left = R[i - 1, j] or diag or left
            else:
                left = False
            row[j] = left
        R[i, : j0 + 1] = row
    return R


def _backward_reach(M, i0, j0):
    # can-reach-final-row over rows i0..n-1, cols j0..m-1
    n, m = M.shape
    R = np.zeros_like(M)
    R[n - 1, j0:] = M[n - 1, j0:]
    for i in range(n - 2, i0 - 1, -1):
        right = False
        row = np.zeros(m - j0, dtype=bool)
        for j in range(m - 1, j0 - 1, -1):
            if M[i, j]:
                diag = R[i + 1, j + 1] if j + 1 < m else False
                right = R[i + 1, j] or diag or right
            else:
                right = False
            row[j - j0] = right
        R[i, j0:] = row
    return R


def witness_reparam(flow, x, y, q):
    """A monotone time change following an accepting lattice path, or None.

    Tie-break: diagonal first, then advancing x only, then advancing y only.
    Replaying the witness keeps the matched gap within delta plus the flow's
    modulus of continuity over a couple of grid steps.
    """
    M, i0, j0 = freespace_matrix(flow, x, y, q)
    Rs = _forward_reach(M, i0, j0)
    Re = _backward_reach(M, i0, j0)
    if not (Rs[i0, j0] and Re[i0, j0]):
        return None
    n, m = M.shape
    path = [(i0, j0)]
    i, j = i0, j0
    while i > 0:  # backward walk on Rs, mirrored tie-break
        if j > 0 and Rs[i - 1, j - 1]:
            i, j = i - 1, j - 1
        elif Rs[i - 1, j]:
            i, j = i - 1, j
        else:
            j = j - 1
        path.append((i, j))
    path.reverse()
    i, j = i0, j0
    while i < n - 1:
        if j + 1 < m and Re[i + 1, j + 1]:
            i, j = i + 1, j + 1
        elif Re[i + 1, j]:
            i, j = i + 1, j
        else:
            j = j + 1
        path.append((i, j))
    g = q.grid_step
    col_j = {}
    for (pi, pj) in path:
        col_j[pi] = max(pj, col_j.get(pi, 0))
    col_j[i0] = j0  # h(0) = 0 exactly
    ts = np.array(sorted(col_j), dtype=np.int64)
    us = np.array([col_j[i] for i in ts], dtype=np.float64)
    knots = np.column_stack([(ts - i0) * g, (us - j0) * g])
    anchor = int(np.where(ts == i0)[0][0])
    eps = g * 1e-9
    for k in range(anchor - 1, -1, -1):  # strictness nudges, anchor untouched
        if knots[k, 1] >= knots[k + 1, 1]:
            knots[k, 1] = knots[k + 1, 1] - eps
    for k in range(anchor + 1, len(knots)):
        if knots[k, 1] <= knots[k - 1, 1]:
            knots[k, 1] = knots[k - 1, 1] + eps
    return Reparameterization(knots)


def replay_max_gap(flow, x, y, h, q, refine=4):
    """Largest matched-trajectory gap when replaying a witness on a finer grid."""
    worst = 0.0
    step = q.grid_step / refine
    t = -q.horizon
    while t <= q.horizon + 1e-12:
        d = flow.distance(flow.evaluate(t, x), flow.evaluate(h.evaluate(t), y))
        if d > worst:
            worst = d
        t += step
    return worst


# ---------------------------------------------------------------------------
# inclusion checks
# ---------------------------------------------------------------------------

def check_ball_transitivity(flow, x, delta, alpha, probes, q):
    """Members y, z of the delta-ball of x must satisfy z in the alpha-ball
    of y (alpha = 2 delta is the sound surrogate); returns violating triples."""
    members = [p for p in probes if flow_ball_member(flow, x, p, q.with_delta(delta))]
    violations = []
    for yy in members:
        for zz in members:
            if not flow_ball_member(flow, yy, zz, q.with_delta(alpha)):
                violations.append((x, yy, zz))
    return violations


def check_time_map_inclusion(flow, T, alpha, delta, pairs, q):
    """Map-ball membership for the time-T map at alpha must imply flow-ball
    membership at delta; returns violating pairs."""
    if T == 0:
        raise InvalidArgument("T must be nonzero")
    f = time_T_map(flow, T)
    N = max(1, int(round(q.horizon / abs(T))))
    q_map = BallQuery(delta=alpha, horizon=N, grid_step=1.0)
    q_flow = q.with_delta(delta)
    violations = []
    for xx, yy in pairs:
        if map_ball_member(f, xx, yy, q_map):
            if not flow_ball_member(flow, xx, yy, q_flow):
                violations.append((xx, yy))
    return violations
