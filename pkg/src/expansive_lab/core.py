"""Metric spaces, points, sampled trajectories, and time reparameterizations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class InvalidArgument(ValueError):
    """Raised when an operation is called outside its contract."""


class UnsupportedQuery(RuntimeError):
    """Raised when a query needs information the system cannot provide."""


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CircleSpace:
    """Circle of circumference 1 with arc-length metric."""

    kind: str = field(default="circle", init=False)

    dim = 1
    diameter = 0.5
    resolution_floor = 0.0

    def point(self, coords):
        arr = np.atleast_1d(np.asarray(coords, dtype=np.float64)) % 1.0
        if arr.shape != (1,):
            raise InvalidArgument("circle points have one coordinate")
        arr.setflags(write=False)
        return MetricPoint(self, arr)

    def distance(self, a, b):
        t = abs(float(a.data[0]) - float(b.data[0])) % 1.0
        return min(t, 1.0 - t)

    def pack(self, points):
        return np.array([p.data for p in points], dtype=np.float64).reshape(-1, 1)

    def unpack(self, packed, i):
        return self.point(packed[i])

    def random_packed(self, rng, n):
        return rng.random((n, 1))


@dataclass(frozen=True)
class TorusSpace:
    """Torus [0,1)^dim with the max of coordinate arc metrics."""

    dim: int = 2
    kind: str = field(default="torus", init=False)

    diameter = 0.5
    resolution_floor = 0.0

    def point(self, coords):
        arr = np.asarray(coords, dtype=np.float64) % 1.0
        if arr.shape != (self.dim,):
            raise InvalidArgument(f"torus points have {self.dim} coordinates")
        arr.setflags(write=False)
        return MetricPoint(self, arr)

    def distance(self, a, b):
        t = np.abs(a.data - b.data) % 1.0
        return float(np.max(np.minimum(t, 1.0 - t)))

    def pack(self, points):
        return np.array([p.data for p in points], dtype=np.float64)

    def unpack(self, packed, i):
        return self.point(packed[i])

    def random_packed(self, rng, n):
        return rng.random((n, self.dim))


@dataclass(frozen=True)
class ShiftSpace:
    """Binary symbol windows of radius W with metric 2^-(first disagreement).

    Windows stand in for two-sided binary sequences; the windowed metric
    agrees with the full-shift metric whenever the smallest disagreeing index
    has magnitude <= W, so values below 2^-W are not resolved.
    """

    W: int = 20
    kind: str = field(default="shift", init=False)

    diameter = 1.0

    def __post_init__(self):
        if not 1 <= self.W <= 31:
            raise InvalidArgument("window radius W must be in [1, 31]")

    @property
    def nbits(self):
        return 2 * self.W + 1

    @property
    def resolution_floor(self):
        return 2.0 ** (-self.W)

    def point(self, bits):
        arr = np.asarray(bits, dtype=np.int64)
        if arr.shape != (self.nbits,):
            raise InvalidArgument(f"symbol windows have {self.nbits} entries")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidArgument("symbol windows are 0/1 valued")
        mask = np.uint64(0)
        for i, v in enumerate(arr):
            if v:
                mask |= np.uint64(1) << np.uint64(i)
        return MetricPoint(self, mask)

    def point_from_mask(self, mask):
        return MetricPoint(self, np.uint64(mask))

    def bits(self, point):
        mask = int(point.data)
        return np.array([(mask >> i) & 1 for i in range(self.nbits)], dtype=np.int64)

    def distance(self, a, b):
        return kernels.window_distance(a.data, b.data, self.W)

    def pack(self, points):
        return np.array([p.data for p in points], dtype=np.uint64)

    def unpack(self, packed, i):
        return self.point_from_mask(packed[i])

    def random_packed(self, rng, n):
        high = 1 << self.nbits
        return rng.integers(0, high, size=n).astype(np.uint64)


class MetricPoint:
    """A point of one of the base spaces; immutable after construction."""

    __slots__ = ("space", "data")

    def __init__(self, space, data):
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "data", data)

    def __setattr__(self, *_):
        raise AttributeError("MetricPoint is immutable")

    def __eq__(self, other):
        if not isinstance(other, MetricPoint) or self.space != other.space:
            return False
        if isinstance(self.data, np.ndarray):
            return bool(np.array_equal(self.data, other.data))
        return self.data == other.data

    def __hash__(self):
        if isinstance(self.data, np.ndarray):
            return hash((self.space, self.data.tobytes()))
        return hash((self.space, int(self.data)))

    def __repr__(self):
        if isinstance(self.data, np.ndarray):
            return f"MetricPoint({self.space.kind}, {self.data.tolist()})"
        return f"MetricPoint({self.space.kind}, 0x{int(self.data):x})"

    @property
    def coords(self):
        if isinstance(self.data, np.ndarray):
            return self.data
        return self.space.bits(self)


def distance(space, a, b):
    """Ambient metric of ``space``; both points must belong to it."""
    if a.space != space or b.space != space:
        raise InvalidArgument("points do not belong to the given space")
    return space.distance(a, b)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Uniform time sampling of a flow line over [t_min, t_max]."""

    base_point: object
    t_min: float
    t_max: float
    step: float
    samples: tuple

    def __post_init__(self):
        expected = int(round((self.t_max - self.t_min) / self.step)) + 1
        if len(self.samples) != expected:
            raise InvalidArgument(
                f"trajectory has {len(self.samples)} samples, expected {expected}")

    def times(self):
        return self.t_min + self.step * np.arange(len(self.samples))


# ---------------------------------------------------------------------------
# reparameterizations
# ---------------------------------------------------------------------------

class Reparameterization:
    """Monotone piecewise-linear time change h with h(0) = 0.

    Stored as strictly increasing knot pairs; evaluation extends linearly
    beyond the knot span using the end slopes.
    """

    __slots__ = ("knots",)

    def __init__(self, knots):
        arr = np.asarray(knots, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            raise InvalidArgument("knots must be an (k, 2) array with k >= 2")
        if not (np.diff(arr[:, 0]) > 0).all() or not (np.diff(arr[:, 1]) > 0).all():
            raise InvalidArgument("knots must be strictly increasing in both coordinates")
        if not ((arr[:, 0] == 0.0) & (arr[:, 1] == 0.0)).any():
            raise InvalidArgument("the knot (0, 0) is required")
        arr.setflags(write=False)
        object.__setattr__(self, "knots", arr)

    def __setattr__(self, *_):
        raise AttributeError("Reparameterization is immutable")

    def __repr__(self):
        return f"Reparameterization({self.knots.tolist()})"

    @classmethod
    def identity(cls, span=1.0):
        return cls([(-span, -span), (0.0, 0.0), (span, span)])

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        k = self.knots
        ts, us = k[:, 0], k[:, 1]
        t = float(t)
        if t < ts[0]:
            slope = (us[1] - us[0]) / (ts[1] - ts[0])
            return us[0] + slope * (t - ts[0])
        if t > ts[-1]:
            slope = (us[-1] - us[-2]) / (ts[-1] - ts[-2])
            return us[-1] + slope * (t - ts[-1])
        return float(np.interp(t, ts, us))

    def evaluate_many(self, t):
        return np.array([self.evaluate(v) for v in np.asarray(t, dtype=np.float64)])

    def inverse(self):
        return Reparameterization(self.knots[:, ::-1])

    def compose(self, inner):
        """The map t -> self(inner(t))."""
        # inner's knots, refined with the preimages of self's knot abscissae
        inner_inv = inner.inverse()
        ts = list(inner.knots[:, 0]) + [inner_inv.evaluate(u) for u in self.knots[:, 0]]
        ts = np.unique(np.asarray(ts, dtype=np.float64))
        knots = []
        for t in ts:
            u = self.evaluate(inner.evaluate(t))
            knots.append((t, u))
        knots = _dedupe_monotone(knots)
        return Reparameterization(knots)


def _dedupe_monotone(pairs):
    out = []
    for t, u in pairs:
        if out and (t <= out[-1][0] or u <= out[-1][1]):
            continue
        out.append((float(t), float(u)))
    # the (0,0) knot can be lost to floating refinement; restore it exactly
    if not any(t == 0.0 and u == 0.0 for t, u in out):
        out = [(t, u) for t, u in out if not (abs(t) < 1e-12 or abs(u) < 1e-12)]
        out.append((0.0, 0.0))
        out.sort()
    return out


def reparam_eval(h, t):
    return h.evaluate(t)


def reparam_inverse(h):
    return h.inverse()


def reparam_compose(g, h):
    """Knot-level composition g o h."""
    return g.compose(h)


def build_periodic_reparam(a, b, alpha, span):
    """Piecewise-linear time change aligning a period-a orbit with a period-b one.

    Knot abscissae step by alpha inside blocks of m knots and jump to the next
    multiple of the period at block boundaries; ordinates do the same with b
    in place of a.
    """
    if a <= 0 or b <= 0 or alpha <= 0:
        raise InvalidArgument("a, b, alpha must be positive")
    if alpha >= min(a, b):
        raise InvalidArgument("alpha must be smaller than min(a, b)")
    m = int(math.floor((a - alpha / 2.0) / alpha)) + 1
    p_lo = int(math.floor(-span / a)) - 1
    p_hi = int(math.ceil(span / a)) + 1
    knots = []
    for p in range(p_lo, p_hi + 1):
        for q in range(m):
            t = p * a + q * alpha
            u = p * b + q * alpha
            if -span <= t <= span:
                knots.append((t, u))
    if not knots:
        raise InvalidArgument("span too small to contain any knot")
    knots.sort()
    for (t0, u0), (t1, u1) in zip(knots, knots[1:]):
        if t1 <= t0 or u1 <= u0:
            raise InvalidArgument(
                "periods too far apart for a monotone reparameterization "
                f"(a={a}, b={b}, alpha={alpha})")
    return Reparameterization(knots)
