"""Homeomorphisms, the flow interface, and the plain circle rotation flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (CircleSpace, InvalidArgument, MetricPoint, ShiftSpace,
                   TorusSpace, Trajectory, UnsupportedQuery)


# ---------------------------------------------------------------------------
# homeomorphisms of the base spaces
# ---------------------------------------------------------------------------

class CircleRotationMap:
    """Rigid rotation x -> x + rho of the circle."""

    def __init__(self, rho):
        self.rho = float(rho)
        self.space = CircleSpace()

    def __repr__(self):
        return f"CircleRotationMap(rho={self.rho})"

    def forward(self, p):
        return self.space.point(p.data + self.rho)

    def inverse(self, p):
        return self.space.point(p.data - self.rho)

    def iterate(self, p, n):
        return self.space.point(p.data + n * self.rho)

    def forward_packed(self, packed):
        return (packed + self.rho) % 1.0

    def inverse_packed(self, packed):
        return (packed - self.rho) % 1.0

    def orbit_blocks(self, packed):
        # rows [x, f(x), f^2(x)] per atom, used by chain-metric batch kernels
        n = packed.shape[0]
        out = np.empty((n, 3, packed.shape[1]))
        for k in range(3):
            out[:, k, :] = (packed + k * self.rho) % 1.0
        return out


class BinaryShiftMap:
    """One-step window shift; a cyclic rotation of the packed word."""

    def __init__(self, W=20):
        self.space = ShiftSpace(W)
        self.W = self.space.W

    def __repr__(self):
        return f"BinaryShiftMap(W={self.W})"

    def forward(self, p):
        return self.space.point_from_mask(kernels.rotate_word(p.data, 1, self.space.nbits))

    def inverse(self, p):
        return self.space.point_from_mask(kernels.rotate_word(p.data, -1, self.space.nbits))

    def iterate(self, p, n):
        return self.space.point_from_mask(kernels.rotate_word(p.data, n, self.space.nbits))

    def forward_packed(self, packed):
        nbits = self.space.nbits
        one = np.uint64(1)
        return (packed >> one) | ((packed & one) << np.uint64(nbits - 1))

    def inverse_packed(self, packed):
        nbits = self.space.nbits
        full = np.uint64((1 << nbits) - 1)
        return ((packed << np.uint64(1)) & full) | (packed >> np.uint64(nbits - 1))


class ToralAutomorphism:
    """Hyperbolic (or at least invertible) integer matrix acting on the 2-torus."""

    def __init__(self, matrix=((2, 1), (1, 1))):
        m = np.asarray(matrix, dtype=np.int64)
        if m.shape != (2, 2):
            raise InvalidArgument("toral automorphisms use a 2x2 integer matrix")
        det = int(round(np.linalg.det(m)))
        if det not in (1, -1):
            raise InvalidArgument("matrix determinant must be +-1")
        self.matrix = m
        self.inv_matrix = (np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]],
                                    dtype=np.int64) * det)
        self.space = TorusSpace(2)

    def __repr__(self):
        return f"ToralAutomorphism({self.matrix.tolist()})"

    def forward(self, p):
        return self.space.point(self.matrix @ p.data)

    def inverse(self, p):
        return self.space.point(self.inv_matrix @ p.data)

    def iterate(self, p, n):
        v = p.data
        m = self.matrix if n >= 0 else self.inv_matrix
        for _ in range(abs(n)):
            v = (m @ v) % 1.0
        return self.space.point(v)

    def forward_packed(self, packed):
        return (packed @ self.matrix.T) % 1.0

    def inverse_packed(self, packed):
        return (packed @ self.inv_matrix.T) % 1.0

    def orbit_blocks(self, packed):
        n = packed.shape[0]
        out = np.empty((n, 3, 2))
        cur = packed
        for k in range(3):
            out[:, k, :] = cur
            cur = (cur @ self.matrix.T) % 1.0
        return out


class TimeTMap:
    """The time-T map of a flow, as a homeomorphism of the flow's space."""

    def __init__(self, flow, T):
        self.flow = flow
        self.T = float(T)
        self.space = flow.space

    def __repr__(self):
        return f"TimeTMap({self.flow.name}, T={self.T})"

    def forward(self, p):
        return self.flow.evaluate(self.T, p)

    def inverse(self, p):
        return self.flow.evaluate(-self.T, p)

    def iterate(self, p, n):
        return self.flow.evaluate(n * self.T, p)


def time_T_map(flow, T):
    return TimeTMap(flow, T)


# ---------------------------------------------------------------------------
# periodic structure descriptions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicSet:
    """Analytic description of the points of period <= T.

    kind is one of "empty", "all" (shared minimal period in ``period``) or
    "orbits" (explicit list of (point, minimal period) orbit representatives).
    """

    kind: str
    period: float | None = None
    orbits: tuple = ()

    @property
    def is_empty(self):
        return self.kind == "empty"


# ---------------------------------------------------------------------------
# plain rotation flow on the circle
# ---------------------------------------------------------------------------

class CircleRotationFlow:
    """Unit-speed-omega rotation flow; every point is periodic with period 1/|omega|."""

    name = "circle_rotation"

    def __init__(self, omega=1.0):
        if omega == 0:
            raise InvalidArgument("omega must be nonzero")
        self.omega = float(omega)
        self.space = CircleSpace()
        self.known_singularities = ()

    def params(self):
        return {"omega": self.omega}

    def evaluate(self, t, p):
        if p.space != self.space:
            raise InvalidArgument("point does not belong to the flow's space")
        return self.space.point(p.data + self.omega * t)

    def advance_packed(self, packed, t):
        return (packed + self.omega * t) % 1.0

    def sample_packed(self, p, times):
        return ((p.data[0] + self.omega * times) % 1.0).reshape(-1, 1)

    def periodic_set(self, T):
        period = 1.0 / abs(self.omega)
        if period <= T:
            return PeriodicSet(kind="all", period=period)
        return PeriodicSet(kind="empty")

    def distance(self, a, b):
        return self.space.distance(a, b)


# ---------------------------------------------------------------------------
# flow-level operations
# ---------------------------------------------------------------------------

def evaluate_flow(flow, t, x):
    return flow.evaluate(t, x)


def sample_trajectory(flow, x, t_min, t_max, step):
    n = int(round((t_max - t_min) / step)) + 1
    samples = tuple(flow.evaluate(t_min + i * step, x) for i in range(n))
    return Trajectory(base_point=x, t_min=t_min, t_max=t_max, step=step,
                      samples=samples)


def periodic_points(flow, T):
    if T < 0:
        raise InvalidArgument("T must be nonnegative")
    try:
        return flow.periodic_set(T)
    except AttributeError:
        raise UnsupportedQuery(f"{flow.name} has no periodic-structure description")


def is_recurrent_sample(flow, x, horizon, eps, step=0.25):
    """True when some sampled t in [1, horizon] returns within eps of x."""
    if horizon <= 0 or eps <= 0:
        raise InvalidArgument("horizon and eps must be positive")
    t = 1.0
    while t <= horizon + 1e-12:
        if flow.distance(flow.evaluate(t, x), x) <= eps:
            return True
        t += step
    return False


def modulus_of_continuity(flow, step, points, n_sub=8):
    """Sampled sup of d(phi_u(z), z) over u in [0, step] and the given points."""
    worst = 0.0
    for p in points:
        for k in range(1, n_sub + 1):
            u = step * k / n_sub
            d = flow.distance(flow.evaluate(u, p), p)
            if d > worst:
                worst = d
    return worst
