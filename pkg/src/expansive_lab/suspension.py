"""Mapping-torus (suspension) spaces, their flows, metrics, and equivalences."""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .core import InvalidArgument, MetricPoint, UnsupportedQuery
from .flows import BinaryShiftMap, CircleRotationMap, PeriodicSet, ToralAutomorphism


class Height:
    """Roof function over the base; constant heights unlock the fast kernels."""

    def __init__(self, value_or_fn, tau_min=None, tau_max=None):
        if callable(value_or_fn):
            if tau_min is None or tau_max is None:
                raise InvalidArgument("function heights need tau_min and tau_max bounds")
            self.fn = value_or_fn
            self.const = None
            self.tau_min = float(tau_min)
            self.tau_max = float(tau_max)
        else:
            v = float(value_or_fn)
            self.fn = None
            self.const = v
            self.tau_min = v
            self.tau_max = v
        if self.tau_min <= 0:
            raise InvalidArgument("height must be bounded away from zero")

    def tau(self, base_point):
        if self.const is not None:
            return self.const
        return float(self.fn(base_point))

    def __repr__(self):
        if self.const is not None:
            return f"Height({self.const})"
        return f"Height(fn, [{self.tau_min}, {self.tau_max}])"


class SuspensionPoint:
    """Canonical-form point (base, fiber) with 0 <= fiber < tau(base)."""

    __slots__ = ("space", "base", "fiber")

    def __init__(self, space, base, fiber):
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "fiber", float(fiber))

    def __setattr__(self, *_):
        raise AttributeError("SuspensionPoint is immutable")

    def __eq__(self, other):
        return (isinstance(other, SuspensionPoint) and self.space == other.space
                and self.base == other.base and self.fiber == other.fiber)

    def __hash__(self):
        return hash((self.base, self.fiber))

    def __repr__(self):
        return f"SuspensionPoint({self.base!r}, fiber={self.fiber})"


class SuspensionSpace:
    """Quotient of {(x, t): 0 <= t <= tau(x)} by (x, tau(x)) ~ (f(x), 0).

    Distances are computed in the unit-height model after rescaling fibers by
    1/tau, exactly as the equivalence lambda does; for unit height this is the
    standard chain metric built from horizontal segments of interpolated
    length (1-s) d(x,y) + s d(f x, f y) and vertical segments |ds|, with at
    most one identification crossing (longer chains cannot win while the base
    diameter is at most 1).
    """

    kind = "suspension"

    def __init__(self, base_map, height=1.0):
        self.base_map = base_map
        self.base_space = base_map.space
        self.height = height if isinstance(height, Height) else Height(height)
        if self.base_space.diameter > 1.0:
            raise InvalidArgument("base diameter must be normalized to <= 1")

    def __repr__(self):
        return f"SuspensionSpace({self.base_map!r}, {self.height!r})"

    def __eq__(self, other):
        return (isinstance(other, SuspensionSpace)
                and type(self.base_map) is type(other.base_map)
                and repr(self.base_map) == repr(other.base_map)
                and self.height.const == other.height.const)

    def __hash__(self):
        return hash((repr(self.base_map), self.height.const))

    @property
    def diameter(self):
        # nominal bound, used only for query validation
        return self.base_space.diameter + 0.5

    @property
    def resolution_floor(self):
        return self.base_space.resolution_floor

    @property
    def is_bit_base(self):
        return isinstance(self.base_map, BinaryShiftMap)

    def point(self, base, fiber):
        return self.canonicalize(base, fiber)

    def canonicalize(self, base, t):
        """Slide (base, t) through the identifications until 0 <= t < tau."""
        t = float(t)
        if self.height.const is not None:
            tau = self.height.const
            k = math.floor(t / tau)
            if k != 0:
                base = _iterate_base(self.base_map, base, k)
                t -= k * tau
            if t >= tau:  # float guard at the seam
                base = self.base_map.forward(base)
                t -= tau
            if t < 0.0:
                t = 0.0
            return SuspensionPoint(self, base, t)
        x, s = base, t
        while True:
            tx = self.height.tau(x)
            if 0.0 <= s < tx:
                return SuspensionPoint(self, x, s)
            if s >= tx:
                x = self.base_map.forward(x)
                s -= tx
            else:
                x = self.base_map.inverse(x)
                s += self.height.tau(x)

    # -- metric ------------------------------------------------------------

    def unit_fiber(self, p):
        return p.fiber / self.height.tau(p.base)

    def distance(self, p, q):
        if p.space != self or q.space != self:
            raise InvalidArgument("points do not belong to this suspension space")
        fx, fy = self.unit_fiber(p), self.unit_fiber(q)
        if self.is_bit_base:
            W = self.base_space.W
            return kernels.bw_unit_bits(p.base.data, fx, q.base.data, fy, W,
                                        self.base_space.nbits)
        ox = self._block_for(p.base)
        oy = self._block_for(q.base)
        return kernels.bw_unit_vec(ox, 0, fx, oy, 0, fy)

    def _block_for(self, base):
        rows = [base.data]
        cur = base
        for _ in range(2):
            cur = self.base_map.forward(cur)
            rows.append(cur.data)
        return np.asarray(rows, dtype=np.float64)

    # -- packing -----------------------------------------------------------

    def pack(self, points):
        bases = self.base_space.pack([p.base for p in points])
        fibs = np.array([p.fiber for p in points], dtype=np.float64)
        return (bases, fibs)

    def unpack(self, packed, i):
        bases, fibs = packed
        return SuspensionPoint(self, self.base_space.unpack(bases, i), float(fibs[i]))

    def packed_unit_fibers(self, packed):
        bases, fibs = packed
        if self.height.const is not None:
            return fibs / self.height.const
        taus = np.array([self.height.tau(self.base_space.unpack(bases, i))
                         for i in range(len(fibs))])
        return fibs / taus

    def orbit_blocks(self, packed):
        bases, _ = packed
        return self.base_map.orbit_blocks(bases)


def _iterate_base(base_map, point, k):
    if hasattr(base_map, "iterate"):
        return base_map.iterate(point, k)
    for _ in range(abs(k)):
        point = base_map.forward(point) if k > 0 else base_map.inverse(point)
    return point


def canonicalize(space, base, t):
    return space.canonicalize(base, t)


def advance(space, p, t):
    """The suspension flow: move t along the fiber direction and re-canonicalize."""
    return space.canonicalize(p.base, p.fiber + t)


def bw_distance(space, p, q):
    return space.distance(p, q)


def lambda_equivalence(space, p):
    """Fiber rescaling (x, t) -> (x, t / tau(x)) onto the unit-height model."""
    unit = unit_model(space)
    return SuspensionPoint(unit, p.base, p.fiber / space.height.tau(p.base))


def lambda_inverse(space, p_unit):
    return SuspensionPoint(space, p_unit.base,
                           p_unit.fiber * space.height.tau(p_unit.base))


_UNIT_CACHE = {}


def unit_model(space):
    if space.height.const == 1.0:
        return space
    key = id(space.base_map)
    cached = _UNIT_CACHE.get(key)
    if cached is None:
        cached = SuspensionSpace(space.base_map, 1.0)
        _UNIT_CACHE[key] = cached
    return cached


def dprime_distance(f, x1, x2):
    """min of the base distance and the distance between one-step images."""
    d0 = f.space.distance(x1, x2)
    d1 = f.space.distance(f.forward(x1), f.forward(x2))
    return min(d0, d1)


class LambdaEquivalence:
    """Orbit equivalence between a suspension and its unit-height model."""

    def __init__(self, space):
        self.space = space
        self.target_space = unit_model(space)

    def __repr__(self):
        return f"LambdaEquivalence({self.space!r})"

    def forward(self, p):
        return lambda_equivalence(self.space, p)

    def inverse(self, p_unit):
        return lambda_inverse(self.space, p_unit)

    def forward_packed(self, packed):
        bases, fibs = packed
        if self.space.height.const is None:
            raise NotImplementedError("packed transport needs a constant height")
        return (bases.copy(), fibs / self.space.height.const)


# ---------------------------------------------------------------------------
# the suspension flow as a flow system
# ---------------------------------------------------------------------------

class SuspensionFlow:
    """Flow moving points up the fibers of a suspension space."""

    def __init__(self, space, name="suspension", params=None):
        self.space = space
        self.name = name
        self._params = dict(params or {})
        self.known_singularities = ()

    def params(self):
        return dict(self._params)

    def __repr__(self):
        return f"SuspensionFlow({self.name})"

    def evaluate(self, t, p):
        if p.space != self.space:
            raise InvalidArgument("point does not belong to the flow's space")
        return advance(self.space, p, t)

    def distance(self, p, q):
        return self.space.distance(p, q)

    # -- packed helpers ----------------------------------------------------

    def advance_packed(self, packed, t):
        s = self.space
        if s.height.const is None:
            raise UnsupportedQuery("packed advance needs a constant height")
        tau = s.height.const
        bases, fibs = packed
        total = fibs + t
        k = np.floor(total / tau).astype(np.int64)
        new_fibs = total - k * tau
        new_bases = bases.copy()
        for kk in np.unique(k):
            sel = k == kk
            new_bases[sel] = _iterate_packed(s.base_map, bases[sel], int(kk))
        return (new_bases, new_fibs)

    def traj_pack(self, p, horizon, step):
        """Kernel-ready trajectory of p over [-horizon, horizon]."""
        s = self.space
        if s.height.const is None:
            raise UnsupportedQuery("packed trajectories need a constant height")
        tau = s.height.const
        n = int(round(2 * horizon / step)) + 1
        times = -horizon + step * np.arange(n)
        total = p.fiber + times
        k = np.floor(total / tau).astype(np.int64)
        fib_unit = (total - k * tau) / tau
        kmin = int(k.min())
        kmax = int(k.max())
        idx = (k - kmin).astype(np.int64)
        if s.is_bit_base:
            nbits = s.base_space.nbits
            rots = np.array(
                [kernels.rotate_word(p.base.data, kk, nbits)
                 for kk in range(kmin, kmax + 1)], dtype=np.uint64)
            return ("bits", rots, idx, fib_unit)
        orb = _orbit_rows(s.base_map, p.base, kmin, kmax + 2)
        return ("vec", orb, idx, fib_unit)

    def periodic_set(self, T):
        s = self.space
        if s.height.const is None:
            raise UnsupportedQuery("periodic sets are described for constant heights")
        tau = s.height.const
        f = s.base_map
        if isinstance(f, BinaryShiftMap):
            return _shift_susp_periodic(self, f, tau, T)
        if isinstance(f, CircleRotationMap):
            return _rotation_susp_periodic(self, f, tau, T)
        if isinstance(f, ToralAutomorphism):
            return _toral_susp_periodic(self, f, tau, T)
        raise UnsupportedQuery(f"no periodic-structure description for {f!r}")


def _iterate_packed(base_map, packed, k):
    out = packed
    for _ in range(abs(k)):
        out = base_map.forward_packed(out) if k > 0 else base_map.inverse_packed(out)
    return out


def _orbit_rows(base_map, base, kmin, kmax):
    cur = _iterate_base(base_map, base, kmin)
    rows = [cur.data]
    for _ in range(kmax - kmin):
        cur = base_map.forward(cur)
        rows.append(cur.data)
    return np.asarray(rows, dtype=np.float64)


def _shift_susp_periodic(flow, f, tau, T):
    # window rotations have period 1 (two constant words) or nbits (prime
    # radius windows); only the fixed-word circles are enumerated
    if T < tau:
        return PeriodicSet(kind="empty")
    nbits = f.space.nbits
    if T >= nbits * tau:
        raise UnsupportedQuery("periodic sets beyond the fixed words are not enumerated")
    zeros = f.space.point_from_mask(0)
    ones = f.space.point_from_mask((1 << nbits) - 1)
    orbits = tuple((flow.space.canonicalize(w, 0.0), tau) for w in (zeros, ones))
    return PeriodicSet(kind="orbits", orbits=orbits)


def _rotation_susp_periodic(flow, f, tau, T):
    # rational rotation angles with small denominator give periodic sections
    for q in range(1, 65):
        if abs(q * f.rho - round(q * f.rho)) < 1e-12:
            if q * tau <= T:
                return PeriodicSet(kind="all", period=q * tau)
            return PeriodicSet(kind="empty")
    return PeriodicSet(kind="empty")


def _toral_susp_periodic(flow, f, tau, T):
    n_max = int(math.floor(T / tau))
    if n_max < 1:
        return PeriodicSet(kind="empty")
    if n_max > 8:
        raise UnsupportedQuery("periodic enumeration capped at 8 base iterations")
    seen = []
    orbits = []
    An = np.eye(2, dtype=np.int64)
    for n in range(1, n_max + 1):
        An = An @ f.matrix
        B = An - np.eye(2, dtype=np.int64)
        corners = [B @ np.array(c) for c in ((0, 0), (0, 1), (1, 0), (1, 1))]
        lo = np.floor(np.min(corners, axis=0)).astype(int) - 1
        hi = np.ceil(np.max(corners, axis=0)).astype(int) + 1
        Binv = np.linalg.inv(B)
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                v = (Binv @ np.array([i, j], dtype=float)) % 1.0
                v = np.round(v, 12) % 1.0
                key = (round(v[0], 9), round(v[1], 9))
                if key in seen:
                    continue
                seen.append(key)
                base = f.space.point(v)
                if f.iterate(base, n) == base:
                    orbits.append((flow.space.canonicalize(base, 0.0), n * tau))
    return PeriodicSet(kind="orbits", orbits=tuple(orbits))


# ---------------------------------------------------------------------------
# flow-ball projection check (unit height, small delta)
# ---------------------------------------------------------------------------

def check_flow_ball_projection(space, delta, pairs, query):
    """For unit height and delta < 1/4, membership of y0 in the flow ball of y
    must force base membership in the map ball of the section map under the
    one-step-minimum metric.  Returns the violating pairs."""
    from . import dynball

    if space.height.const != 1.0:
        raise InvalidArgument("this check needs unit height")
    if not (0 < delta < 0.25):
        raise InvalidArgument("delta must lie in (0, 1/4)")
    flow = SuspensionFlow(space)
    f = space.base_map
    q = query.with_delta(delta)
    dprime = lambda a, b: dprime_distance(f, a, b)
    violations = []
    for y, y0 in pairs:
        if dynball.flow_ball_member(flow, y, y0, q):
            ok = dynball.map_ball_member(f, y.base, y0.base, q, metric=dprime)
            if not ok:
                violations.append((y, y0))
    return violations
