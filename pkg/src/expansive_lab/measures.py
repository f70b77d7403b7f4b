"""Finite weighted-atom measures: pushforward, fiber suspension, mass queries."""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from . import kernels
from .core import CircleSpace, InvalidArgument, ShiftSpace, TorusSpace
from .flows import CircleRotationFlow, TimeTMap
from .suspension import SuspensionFlow, SuspensionSpace, lambda_equivalence, unit_model


class EmpiricalMeasure:
    """Nonnegative weighted atoms on one space; immutable after construction."""

    def __init__(self, space, packed, weights, label="measure"):
        weights = np.asarray(weights, dtype=np.float64)
        if (weights < 0).any():
            raise InvalidArgument("weights must be nonnegative")
        n = len(packed[1]) if isinstance(packed, tuple) else packed.shape[0]
        if weights.shape != (n,):
            raise InvalidArgument("one weight per atom required")
        self.space = space
        self.packed = packed
        self.weights = weights
        self.label = label

    def __repr__(self):
        return f"EmpiricalMeasure({self.label}, atoms={self.n_atoms})"

    @property
    def n_atoms(self):
        return len(self.weights)

    @property
    def total_mass(self):
        return math.fsum(self.weights)

    def max_atom_weight(self):
        return float(self.weights.max()) if self.n_atoms else 0.0

    def atom(self, i):
        return self.space.unpack(self.packed, i)

    def atoms(self):
        for i in range(self.n_atoms):
            yield self.atom(i), float(self.weights[i])

    # -- transport ----------------------------------------------------------

    def pushforward(self, mapping, target_space=None, label=None):
        """Move every atom forward through the mapping; weights unchanged."""
        label = label or f"{self.label}|push"
        if hasattr(mapping, "forward_packed"):
            try:
                packed = mapping.forward_packed(self.packed)
                space = target_space or getattr(mapping, "target_space", None) \
                    or getattr(mapping, "space", self.space)
                return EmpiricalMeasure(space, packed, self.weights.copy(), label)
            except (TypeError, NotImplementedError):
                pass
        if isinstance(mapping, TimeTMap) and isinstance(mapping.flow, SuspensionFlow):
            packed = mapping.flow.advance_packed(self.packed, mapping.T)
            return EmpiricalMeasure(self.space, packed, self.weights.copy(), label)
        space = target_space
        pts = []
        for i in range(self.n_atoms):
            img = mapping.forward(self.atom(i))
            if space is None:
                space = img.space
            pts.append(img)
        packed = space.pack(pts)
        return EmpiricalMeasure(space, packed, self.weights.copy(), label)

    def suspend(self, susp_space, m):
        """Lift onto the suspension, splitting each atom into m fiber midpoints.

        Midpoint quadrature of the fiber average: sub-atom j sits at fiber
        (j + 1/2) tau(x) / m with weight w/m, so total mass is preserved and
        fiber-constant integrands are integrated exactly.
        """
        if m < 1:
            raise InvalidArgument("m must be a positive integer")
        if not isinstance(susp_space, SuspensionSpace):
            raise InvalidArgument("target must be a suspension space")
        if susp_space.base_space != self.space:
            raise InvalidArgument("measure lives on a different base space")
        bases_in = self.packed
        n = self.n_atoms
        if isinstance(self.space, ShiftSpace):
            bases = np.repeat(bases_in, m)
        else:
            bases = np.repeat(bases_in, m, axis=0)
        taus = np.empty(n, dtype=np.float64)
        if susp_space.height.const is not None:
            taus.fill(susp_space.height.const)
        else:
            for i in range(n):
                taus[i] = susp_space.height.tau(self.atom(i))
        j = np.tile(np.arange(m, dtype=np.float64) + 0.5, n)
        fibs = j * np.repeat(taus, m) / m
        weights = np.repeat(self.weights / m, m)
        return EmpiricalMeasure(susp_space, (bases, fibs), weights,
                                label=f"{self.label}|susp(m={m})")

    # -- mass queries ---------------------------------------------------------

    def ball_mass(self, member):
        """Total weight of atoms satisfying the membership predicate.

        ``member`` is either a boolean array over atoms or a predicate on
        points; summation is compensated for order-independent determinism.
        """
        if callable(member):
            sel = np.fromiter((bool(member(self.atom(i))) for i in range(self.n_atoms)),
                              count=self.n_atoms, dtype=bool)
        else:
            sel = np.asarray(member, dtype=bool)
            if sel.shape != (self.n_atoms,):
                raise InvalidArgument("boolean mask must cover all atoms")
        if not sel.any():
            return 0.0
        return math.fsum(self.weights[sel])

    # -- serialization ----------------------------------------------------

    def column_names(self):
        sp = self.space
        if isinstance(sp, ShiftSpace):
            return [f"s{i}" for i in range(sp.nbits)]
        if isinstance(sp, (CircleSpace, TorusSpace)):
            return [f"x{i}" for i in range(sp.dim)]
        if isinstance(sp, SuspensionSpace):
            if sp.is_bit_base:
                base_cols = [f"s{i}" for i in range(sp.base_space.nbits)]
            else:
                base_cols = [f"x{i}" for i in range(sp.base_space.dim)]
            return base_cols + ["fiber"]
        raise InvalidArgument(f"unknown space {sp!r}")

    def table(self):
        cols = []
        sp = self.space
        if isinstance(sp, ShiftSpace):
            bits = np.array([[(int(mask) >> i) & 1 for i in range(sp.nbits)]
                             for mask in self.packed], dtype=np.float64)
            cols.append(bits)
        elif isinstance(sp, SuspensionSpace):
            bases, fibs = self.packed
            if sp.is_bit_base:
                bits = np.array([[(int(mask) >> i) & 1
                                  for i in range(sp.base_space.nbits)]
                                 for mask in bases], dtype=np.float64)
                cols.append(bits)
            else:
                cols.append(np.asarray(bases, dtype=np.float64))
            cols.append(fibs.reshape(-1, 1))
        else:
            cols.append(np.asarray(self.packed, dtype=np.float64))
        cols.append(self.weights.reshape(-1, 1))
        return np.hstack(cols)

    def to_csv(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.column_names() + ["weight"])
            for row in self.table():
                writer.writerow([repr(float(v)) for v in row])
        os.replace(tmp, path)

    def to_binary(self, path):
        tmp = f"{path}.tmp"
        self.table().astype("<f8").tofile(tmp)
        os.replace(tmp, path)

    @classmethod
    def from_table(cls, space, table, label="loaded"):
        table = np.asarray(table, dtype=np.float64)
        weights = table[:, -1]
        body = table[:, :-1]
        if isinstance(space, ShiftSpace):
            packed = _bits_to_masks(body, space.nbits)
        elif isinstance(space, SuspensionSpace):
            fibs = body[:, -1].copy()
            base_body = body[:, :-1]
            if space.is_bit_base:
                packed = (_bits_to_masks(base_body, space.base_space.nbits), fibs)
            else:
                packed = (base_body.copy(), fibs)
        else:
            packed = body.copy()
        return cls(space, packed, weights.copy(), label)

    @classmethod
    def from_csv(cls, space, path, label=None):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
        return cls.from_table(space, np.asarray(rows), label or os.path.basename(path))

    @classmethod
    def from_binary(cls, space, path, n_columns, label=None):
        flat = np.fromfile(path, dtype="<f8")
        table = flat.reshape(-1, n_columns)
        return cls.from_table(space, table, label or os.path.basename(path))


def _bits_to_masks(body, nbits):
    masks = np.zeros(body.shape[0], dtype=np.uint64)
    for i in range(nbits):
        masks |= (body[:, i] > 0.5).astype(np.uint64) << np.uint64(i)
    return masks


def max_atom_weight(mu):
    return mu.max_atom_weight()


def pushforward(mu, mapping, **kw):
    return mu.pushforward(mapping, **kw)


def suspend_measure(mu, susp_space, m):
    return mu.suspend(susp_space, m)


def ball_mass(mu, member):
    return mu.ball_mass(member)


# ---------------------------------------------------------------------------
# orbit tubes
# ---------------------------------------------------------------------------

def orbit_tube_members(mu, flow, x, horizon, tube, sample_step=None):
    """Boolean mask of atoms within ``tube`` of the sampled orbit segment of x."""
    if tube <= 0:
        raise InvalidArgument("tube must be positive")
    step = sample_step if sample_step is not None else max(tube / 2.0, 1e-3)
    n = int(math.ceil(2 * horizon / step)) + 1
    times = np.linspace(-horizon, horizon, n)
    if isinstance(flow, SuspensionFlow) and flow.space.height.const is not None:
        s = flow.space
        # orbit sampled through the packed-trajectory helper on a matching grid
        grid = (times[1] - times[0]) if n > 1 else horizon
        pk = flow.traj_pack(x, horizon, grid)
        bases, fibs = mu.packed
        unit_f = s.packed_unit_fibers(mu.packed)
        if s.is_bit_base:
            within = kernels.tube_any_bits(pk[1], pk[2], pk[3], bases, unit_f,
                                           tube, s.base_space.W, s.base_space.nbits)
        else:
            blocks = s.orbit_blocks(mu.packed)
            within = kernels.tube_any_vec(pk[1], pk[2], pk[3], blocks, unit_f, tube)
        return np.asarray(within, dtype=bool)
    if isinstance(flow, CircleRotationFlow):
        orbit = flow.sample_packed(x, times)
        d = np.abs(mu.packed[None, :, :] - orbit[:, None, :]) % 1.0
        d = np.minimum(d, 1.0 - d).max(axis=2)
        return (d <= tube).any(axis=0)
    samples = [flow.evaluate(t, x) for t in times]
    within = np.zeros(mu.n_atoms, dtype=bool)
    for i in range(mu.n_atoms):
        p = mu.atom(i)
        for sp in samples:
            if flow.distance(sp, p) <= tube:
                within[i] = True
                break
    return within


def orbit_mass(mu, flow, x, horizon, tube, sample_step=None):
    """Mass of atoms within ``tube`` of the sampled orbit segment of x."""
    return mu.ball_mass(orbit_tube_members(mu, flow, x, horizon, tube, sample_step))


def tube_mass_around_point(mu, point, tube):
    """Mass within ``tube`` of a single point of the measure's space."""
    within = np.zeros(mu.n_atoms, dtype=bool)
    for i in range(mu.n_atoms):
        within[i] = mu.space.distance(point, mu.atom(i)) <= tube
    return mu.ball_mass(within)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def bernoulli_measure(space, n, rng, label="bernoulli(1/2)"):
    if not isinstance(space, ShiftSpace):
        raise InvalidArgument("Bernoulli sampling needs a shift space")
    masks = space.random_packed(rng, n)
    return EmpiricalMeasure(space, masks, np.full(n, 1.0 / n), label)


def lebesgue_measure(space, n, rng, label="lebesgue"):
    if not isinstance(space, (CircleSpace, TorusSpace)):
        raise InvalidArgument("Lebesgue sampling needs a circle or torus")
    packed = space.random_packed(rng, n)
    return EmpiricalMeasure(space, packed, np.full(n, 1.0 / n), label)


def orbit_supported_measure(flow, x, n, horizon, label="on-orbit"):
    """Atoms spread along one orbit segment: the mandatory rejection case."""
    times = np.linspace(-horizon, horizon, n)
    pts = [flow.evaluate(t, x) for t in times]
    packed = flow.space.pack(pts)
    return EmpiricalMeasure(flow.space, packed, np.full(n, 1.0 / n), label)


def lambda_pushforward(mu, susp_space):
    """Push a suspension measure through the unit-height equivalence."""
    if mu.space != susp_space:
        raise InvalidArgument("measure does not live on the given suspension")
    bases, fibs = mu.packed
    if susp_space.height.const is not None:
        new_fibs = fibs / susp_space.height.const
    else:
        taus = np.array([susp_space.height.tau(mu.atom(i).base)
                         for i in range(mu.n_atoms)])
        new_fibs = fibs / taus
    target = unit_model(susp_space)
    return EmpiricalMeasure(target, (bases.copy(), new_fibs),
                            mu.weights.copy(), label=f"{mu.label}|lambda")
