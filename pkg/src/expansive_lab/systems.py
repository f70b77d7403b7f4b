"""Built-in dynamical systems and config-driven construction."""

from __future__ import annotations

import math

import numpy as np

from .core import InvalidArgument, ShiftSpace
from .flows import (BinaryShiftMap, CircleRotationFlow, CircleRotationMap,
                    ToralAutomorphism)
from .measures import (bernoulli_measure, lebesgue_measure,
                       orbit_supported_measure)
from .suspension import SuspensionFlow, SuspensionSpace

GOLDEN_RHO = (math.sqrt(5.0) - 1.0) / 2.0

REGISTRY = {
    "circle_rotation": {
        "params": {"omega": 1.0},
        "summary": "rotation flow on the circle; every point periodic",
    },
    "shift_suspension": {
        "params": {"W": 20, "tau": 1.0},
        "summary": "unit-height suspension of the binary window shift",
    },
    "cat_suspension": {
        "params": {"tau": 1.0},
        "summary": "suspension of the [[2,1],[1,1]] toral automorphism",
    },
    "irrational_rotation_suspension": {
        "params": {"rho": GOLDEN_RHO, "tau": 1.0},
        "summary": "suspension of an irrational circle rotation (torus flow)",
    },
}


def build_system(spec):
    kind = spec.get("kind")
    if kind not in REGISTRY:
        raise InvalidArgument(f"system.kind: unknown system {kind!r}")
    if kind == "circle_rotation":
        return CircleRotationFlow(omega=float(spec.get("omega", 1.0)))
    if kind == "shift_suspension":
        W = int(spec.get("W", 20))
        tau = float(spec.get("tau", 1.0))
        space = SuspensionSpace(BinaryShiftMap(W), tau)
        return SuspensionFlow(space, name="shift_suspension",
                              params={"W": W, "tau": tau})
    if kind == "cat_suspension":
        tau = float(spec.get("tau", 1.0))
        space = SuspensionSpace(ToralAutomorphism(), tau)
        return SuspensionFlow(space, name="cat_suspension", params={"tau": tau})
    if kind == "irrational_rotation_suspension":
        rho = float(spec.get("rho", GOLDEN_RHO))
        tau = float(spec.get("tau", 1.0))
        space = SuspensionSpace(CircleRotationMap(rho), tau)
        return SuspensionFlow(space, name="irrational_rotation_suspension",
                              params={"rho": rho, "tau": tau})
    raise InvalidArgument(f"system.kind: unknown system {kind!r}")


def build_measure(spec, flow, rng):
    """Returns (measure on the flow's space, base measure or None)."""
    kind = spec.get("kind")
    n = int(spec.get("atoms", 2000))
    if n < 1:
        raise InvalidArgument("measure.atoms: must be positive")
    if kind == "bernoulli":
        if not (isinstance(flow, SuspensionFlow) and flow.space.is_bit_base):
            raise InvalidArgument("measure.kind: bernoulli needs a shift suspension")
        base = bernoulli_measure(flow.space.base_space, n, rng)
        m = int(spec.get("m", 8))
        return base.suspend(flow.space, m), base
    if kind == "lebesgue":
        if isinstance(flow, CircleRotationFlow):
            mu = lebesgue_measure(flow.space, n, rng)
            return mu, mu
        if isinstance(flow, SuspensionFlow) and not flow.space.is_bit_base:
            base = lebesgue_measure(flow.space.base_space, n, rng)
            m = int(spec.get("m", 8))
            return base.suspend(flow.space, m), base
        raise InvalidArgument("measure.kind: lebesgue needs a circle or torus section")
    if kind == "on_orbit":
        horizon = float(spec.get("orbit_horizon", 100.0))
        x = _default_point(flow, rng)
        mu = orbit_supported_measure(flow, x, n, horizon)
        return mu, None
    raise InvalidArgument(f"measure.kind: unknown measure {kind!r}")


def _default_point(flow, rng):
    if isinstance(flow, CircleRotationFlow):
        return flow.space.point(rng.random(1))
    space = flow.space
    if space.is_bit_base:
        base = space.base_space.point_from_mask(
            int(rng.integers(0, 1 << space.base_space.nbits)))
    else:
        base = space.base_space.point(rng.random(space.base_space.dim))
    return space.canonicalize(base, 0.0)


def list_systems():
    rows = []
    for name, info in REGISTRY.items():
        params = ", ".join(f"{k}={v}" for k, v in info["params"].items())
        rows.append((name, params, info["summary"]))
    return rows
