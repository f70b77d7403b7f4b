"""Desk-scale toolkit for expansive measures of flows.

Decides membership in reparameterized dynamic balls, constructs suspension
flows and fiber-averaged measures, and runs empirical verdict procedures on
built-in systems (circle rotations, the binary window shift, a toral
automorphism, and their suspensions).
"""

__version__ = "0.1.0"

from .core import (CircleSpace, InvalidArgument, MetricPoint,
                   Reparameterization, ShiftSpace, TorusSpace, Trajectory,
                   UnsupportedQuery, build_periodic_reparam, distance,
                   reparam_compose, reparam_eval, reparam_inverse)
from .dynball import (BallQuery, flow_ball_member, flow_ball_member_bruteforce,
                      map_ball_member, witness_reparam)
from .flows import (BinaryShiftMap, CircleRotationFlow, CircleRotationMap,
                    TimeTMap, ToralAutomorphism, evaluate_flow,
                    is_recurrent_sample, periodic_points, sample_trajectory,
                    time_T_map)
from .measures import (EmpiricalMeasure, ball_mass, bernoulli_measure,
                       lebesgue_measure, max_atom_weight, orbit_mass,
                       pushforward, suspend_measure)
from .suspension import (Height, LambdaEquivalence, SuspensionFlow,
                         SuspensionPoint, SuspensionSpace, advance, bw_distance,
                         canonicalize, dprime_distance, lambda_equivalence)
from .systems import build_measure, build_system, list_systems

__all__ = [name for name in dir() if not name.startswith("_")]
