"""Experiment runner: configure a system, a measure, and checks; emit reports."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .core import InvalidArgument, UnsupportedQuery
from .dynball import (BallQuery, bruteforce_matrix, check_ball_transitivity,
                      check_time_map_inclusion, flow_ball_member,
                      flow_ball_member_bruteforce)
from .expansivity import (build_pair_set, check_ae_characterization,
                          check_aperiodicity, check_equivalence_invariance,
                          check_singular_support, check_suspension_correspondence,
                          check_time_map_expansivity, default_eps_verdict,
                          perturbed_family, sample_centers,
                          search_expansivity_constant,
                          surface_recurrence_experiment)
from .flows import CircleRotationFlow
from .kernels import backend_name, dp_member_matrix
from .measures import orbit_mass
from .suspension import (LambdaEquivalence, SuspensionFlow, SuspensionSpace,
                         check_flow_ball_projection)
from .systems import build_measure, build_system, list_systems


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="expansive-lab",
        description="desk-scale experiments with expansive measures for flows")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run the checks described by a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out-dir", default=None,
                       help="redirect report files into this directory")
    sub.add_parser("list-systems", help="print the built-in system registry")
    p_oracle = sub.add_parser(
        "oracle-check",
        help="compare the sweep decider against brute-force path search")
    p_oracle.add_argument("--instances", type=int, default=200)
    p_oracle.add_argument("--seed", type=int, default=20240901)
    sub.add_parser("version", help="print the package version")
    args = parser.parse_args(argv)
    if args.cmd == "run":
        return cmd_run(args.config, args.out_dir)
    if args.cmd == "list-systems":
        return cmd_list_systems()
    if args.cmd == "oracle-check":
        return cmd_oracle_check(args.instances, args.seed)
    if args.cmd == "version":
        print(f"expansive-lab {__version__} (kernels: {backend_name()})")
        return 0
    return 1


def cmd_list_systems():
    rows = list_systems()
    name_w = max(len(r[0]) for r in rows)
    par_w = max(len(r[1]) for r in rows)
    for name, params, summary in rows:
        print(f"{name:<{name_w}}  {params:<{par_w}}  {summary}")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

class _ConfigError(Exception):
    pass


def _require(cfg, field, kind=None):
    if field not in cfg:
        raise _ConfigError(f"missing field {field!r}")
    v = cfg[field]
    if kind is not None and not isinstance(v, kind):
        raise _ConfigError(f"field {field!r} has wrong type")
    return v


def cmd_run(config_path, out_dir=None):
    try:
        with open(config_path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: cannot read {config_path}: {e}")
        return 1
    try:
        ctx = _build_context(cfg)
    except (_ConfigError, InvalidArgument) as e:
        print(f"config error: {e}")
        return 1
    results = {}
    all_passed = True
    for check in cfg.get("checks", []):
        name = check.get("name")
        handler = _CHECKS.get(name)
        if handler is None:
            print(f"config error: checks: unknown check {name!r}")
            return 1
        passed, detail = handler(ctx, check)
        results[name] = {"passed": passed, **detail}
        all_passed &= passed
        print(f"check {name}: {'PASS' if passed else 'FAIL'}")
    _write_reports(cfg, ctx, results, out_dir)
    return 0 if all_passed else 2


class _Ctx:
    pass


def _build_context(cfg):
    _require(cfg, "schema_version", int)
    seed = _require(cfg, "seed", int)
    system = _require(cfg, "system", dict)
    measure = _require(cfg, "measure", dict)
    query = _require(cfg, "query", dict)
    ctx = _Ctx()
    ctx.seed = seed
    seqs = np.random.SeedSequence(seed).spawn(4)
    ctx.rng_measure = np.random.default_rng(seqs[0])
    ctx.rng_centers = np.random.default_rng(seqs[1])
    ctx.rng_pairs = np.random.default_rng(seqs[2])
    ctx.rng_misc = np.random.default_rng(seqs[3])
    ctx.flow = build_system(system)
    ctx.mu, ctx.mu_base = build_measure(measure, ctx.flow, ctx.rng_measure)
    grid = _require(query, "delta_grid", list)
    if not grid or sorted(grid) != grid:
        raise _ConfigError("query.delta_grid must be a nonempty ascending list")
    floor = getattr(ctx.flow.space, "resolution_floor", 0.0)
    diam = getattr(ctx.flow.space, "diameter", 1.0)
    for d in grid:
        if not (floor <= d <= diam):
            raise _ConfigError(
                f"query.delta_grid: {d} outside [{floor}, {diam}]")
    ctx.delta_grid = [float(d) for d in grid]
    try:
        ctx.q = BallQuery(delta=ctx.delta_grid[0],
                          horizon=float(_require(query, "horizon", (int, float))),
                          grid_step=float(_require(query, "grid_step", (int, float))))
    except InvalidArgument as e:
        raise _ConfigError(f"query: {e}")
    centers_cfg = cfg.get("centers", {})
    ctx.flow_centers_k = centers_cfg.get("flow", 32)
    ctx.map_centers_k = centers_cfg.get("map", None)
    ctx.eps = cfg.get("eps_verdict")
    if ctx.eps is None:
        ctx.eps = default_eps_verdict(ctx.mu.n_atoms)
    ctx.m_subatoms = int(measure.get("m", 8))
    ctx.expansivity_report = None
    return ctx


def _flow_centers(ctx):
    k = ctx.flow_centers_k
    return sample_centers(ctx.mu, None if k == "all" else int(k),
                          ctx.rng_centers)


def _check_expansivity(ctx, params):
    centers = _flow_centers(ctx)
    rep = search_expansivity_constant(
        ctx.flow, ctx.mu, ctx.delta_grid, ctx.q, centers,
        eps_verdict=ctx.eps,
        orbit_horizon=float(params.get("orbit_horizon", 2.0)))
    ctx.expansivity_report = rep
    passed = True
    detail = rep.to_dict()
    expect = params.get("expect_verdict")
    if expect is not None:
        passed &= (rep.verdict == expect)
    floors = params.get("expect_min_mass", {})
    for dstr, bound in floors.items():
        d = float(dstr)
        i = ctx.delta_grid.index(d)
        passed &= (rep.min_mass[i] >= float(bound))
    return passed, detail


def _check_time_map_inclusion(ctx, params):
    T = float(params.get("T", 1.0))
    delta = float(params.get("delta", 0.125))
    alpha = float(params.get("alpha", delta / 2.0))
    n_pairs = int(params.get("pairs", 10000))
    keep = int(params.get("near_keep_radius", 15))
    pairs = build_pair_set(ctx.flow, ctx.mu, n_pairs, ctx.rng_pairs,
                           keep_radius=keep)
    violations = check_time_map_inclusion(ctx.flow, T, alpha, delta, pairs, ctx.q)
    return len(violations) == 0, {"pairs": n_pairs, "violations": len(violations)}


def _check_flow_ball_projection(ctx, params):
    if not isinstance(ctx.flow, SuspensionFlow):
        raise _ConfigError("flow_ball_projection needs a suspension system")
    delta = float(params.get("delta", 0.125))
    n_pairs = int(params.get("pairs", 1000))
    keep = int(params.get("near_keep_radius", 15))
    pairs = build_pair_set(ctx.flow, ctx.mu, n_pairs, ctx.rng_pairs,
                           keep_radius=keep)
    violations = check_flow_ball_projection(ctx.flow.space, delta, pairs, ctx.q)
    return len(violations) == 0, {"pairs": n_pairs, "violations": len(violations)}


def _check_ball_transitivity(ctx, params):
    delta = float(params.get("delta", 0.125))
    factor = float(params.get("factor", 2.0))
    n_centers = int(params.get("centers", 10))
    probes_k = int(params.get("probes_per_center", 9))
    keep = int(params.get("near_keep_radius", 15))
    centers = sample_centers(ctx.mu, n_centers, ctx.rng_centers)
    total = 0
    violations = 0
    for x in centers:
        probes = perturbed_family(ctx.flow, x, probes_k, ctx.rng_pairs, keep)
        bad = check_ball_transitivity(ctx.flow, x, delta, factor * delta,
                                      probes, ctx.q)
        members = len(probes)
        total += members * members
        violations += len(bad)
    return violations == 0, {"triples": total, "violations": violations}


def _check_time_map_expansivity(ctx, params):
    T = float(params.get("T", 1.0))
    alpha = float(params.get("alpha", 0.125))
    centers = _flow_centers(ctx)
    fwd = check_time_map_expansivity(ctx.flow, ctx.mu, T, alpha, ctx.q,
                                     centers, eps_verdict=ctx.eps)
    bwd = check_time_map_expansivity(ctx.flow, ctx.mu, -T, alpha, ctx.q,
                                     centers, eps_verdict=ctx.eps)
    return fwd["passed"] and bwd["passed"], {"forward": fwd, "backward": bwd}


def _check_suspension_correspondence(ctx, params):
    if not isinstance(ctx.flow, SuspensionFlow) or ctx.mu_base is None:
        raise _ConfigError("suspension_correspondence needs a suspension system")
    delta = float(params.get("delta", 0.125))
    res = check_suspension_correspondence(
        ctx.flow.space.base_map, ctx.mu_base, ctx.flow.space.height.const,
        ctx.m_subatoms, delta, ctx.q,
        int(params.get("centers", 64)), ctx.rng_centers)
    if res.get("inconclusive"):
        return False, res
    expect = params.get("expect")
    passed = res["agree"]
    if expect == "both_expansive":
        passed &= res["map_expansive"] and res["flow_expansive"]
    elif expect == "both_not_expansive":
        passed &= not res["map_expansive"] and not res["flow_expansive"]
    return passed, res


def _check_ae_characterization(ctx, params):
    alpha = float(params.get("alpha", 0.25))
    centers_all = sample_centers(ctx.mu, int(params.get("centers", 32)),
                                 ctx.rng_centers)
    ae_centers = sample_centers(ctx.mu, int(params.get("ae_centers", 64)),
                                ctx.rng_centers)
    res = check_ae_characterization(ctx.flow, ctx.mu, alpha, ctx.q,
                                    centers_all, ae_centers, eps_verdict=ctx.eps)
    passed = res["agree"]
    expect = params.get("expect")
    if expect == "both_hold":
        passed &= res["all_centers_hold"] and res["ae_holds"]
    elif expect == "both_fail":
        passed &= not res["all_centers_hold"] and not res["ae_holds"]
    return passed, res


def _check_aperiodicity(ctx, params):
    T_list = [float(t) for t in params.get("T_list", [1.0])]
    tube = float(params.get("tube", 0.01))
    res = check_aperiodicity(ctx.flow, ctx.mu, T_list, ctx.eps, tube=tube)
    passed = True
    at_most = params.get("expect_mass_at_most")
    at_least = params.get("expect_mass_at_least")
    for T in T_list:
        mass = res[T]["mass"]
        if at_most is not None:
            passed &= mass <= float(at_most)
        if at_least is not None:
            passed &= mass >= float(at_least)
    detail = {str(T): res[T] for T in T_list}
    return passed, detail


def _check_singular_support(ctx, params):
    res = check_singular_support(ctx.flow, ctx.mu,
                                 tube=float(params.get("tube", 0.05)))
    return res["passed"], res


def _check_orbit_nullity(ctx, params):
    tube = float(params.get("tube", 0.0625))
    horizon = float(params.get("horizon", 2.0))
    bound = float(params.get("bound", ctx.eps))
    centers = sample_centers(ctx.mu, int(params.get("centers", 4)),
                             ctx.rng_centers)
    masses = [orbit_mass(ctx.mu, ctx.flow, c, horizon, tube) for c in centers]
    worst = max(masses)
    return worst <= bound, {"max_mass": worst, "bound": bound}


def _check_equivalence_invariance(ctx, params):
    if not isinstance(ctx.flow, SuspensionFlow) or ctx.mu_base is None:
        raise _ConfigError("equivalence_invariance needs a suspension system")
    other_tau = float(params.get("other_tau", 2.0))
    space_b = ctx.flow.space
    space_a = SuspensionSpace(space_b.base_map, other_tau)
    flow_a = SuspensionFlow(space_a, name=f"{ctx.flow.name}(tau={other_tau})")
    mu_a = ctx.mu_base.suspend(space_a, ctx.m_subatoms)
    lam = LambdaEquivalence(space_a)
    q_a = ctx.q
    q_b = ctx.q
    pairs = build_pair_set(flow_a, mu_a, int(params.get("pairs", 200)),
                           ctx.rng_pairs,
                           keep_radius=int(params.get("near_keep_radius", 15)))
    pairs_b = [(lam.forward(p), lam.forward(s)) for p, s in pairs]
    res = check_equivalence_invariance(
        flow_a, mu_a, ctx.flow, lam, ctx.delta_grid, q_a, q_b,
        int(params.get("centers", 24)), ctx.rng_centers, pairs=pairs_b,
        eps_verdict=ctx.eps)
    detail = {"verdict_a": res["verdict_a"], "verdict_b": res["verdict_b"],
              "agree": res["agree"],
              "membership_violations": len(res["membership_violations"])}
    return res["agree"] and not res["membership_violations"], detail


def _check_surface_recurrence(ctx, params):
    rep = surface_recurrence_experiment(
        seed=ctx.seed,
        n_atoms=int(params.get("atoms", 20000)),
        m=int(params.get("m", 8)),
        delta_grid=tuple(params.get("delta_grid", (0.02, 0.05, 0.1, 0.2))))
    return rep.passed, rep.to_dict()


_CHECKS = {
    "expansivity": _check_expansivity,
    "time_map_inclusion": _check_time_map_inclusion,
    "flow_ball_projection": _check_flow_ball_projection,
    "ball_transitivity": _check_ball_transitivity,
    "time_map_expansivity": _check_time_map_expansivity,
    "suspension_correspondence": _check_suspension_correspondence,
    "ae_characterization": _check_ae_characterization,
    "aperiodicity": _check_aperiodicity,
    "singular_support": _check_singular_support,
    "orbit_nullity": _check_orbit_nullity,
    "equivalence_invariance": _check_equivalence_invariance,
    "surface_recurrence": _check_surface_recurrence,
}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _resolve_out(path, out_dir):
    if out_dir is None:
        return path
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, os.path.basename(path))


def _atomic_write_text(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_reports(cfg, ctx, results, out_dir):
    out = cfg.get("output", {})
    json_path = _resolve_out(out.get("json", "report.json"), out_dir)
    payload = {
        "schema_version": 1,
        "config_hash": _config_hash(cfg),
        "seed": ctx.seed,
        "system": {"name": ctx.flow.name, **ctx.flow.params()}
        if hasattr(ctx.flow, "params") else {"name": ctx.flow.name},
        "measure": {"label": ctx.mu.label, "atoms": ctx.mu.n_atoms},
        "eps_verdict": ctx.eps,
        "checks": results,
    }
    _atomic_write_text(json_path, json.dumps(payload, indent=2, sort_keys=True,
                                             default=_json_default) + "\n")
    rep = ctx.expansivity_report
    if rep is not None:
        csv_path = _resolve_out(out.get("csv", "per_delta.csv"), out_dir)
        rows = [["delta", "max_mass", "mean_mass", "min_mass"]]
        for i, d in enumerate(rep.delta_grid):
            rows.append([repr(float(d)), repr(rep.max_mass[i]),
                         repr(rep.mean_mass[i]), repr(rep.min_mass[i])])
        text = "\r\n".join(",".join(r) for r in rows) + "\r\n"
        _atomic_write_text(csv_path, text)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return repr(obj)


# ---------------------------------------------------------------------------
# oracle check
# ---------------------------------------------------------------------------

def cmd_oracle_check(instances, seed):
    rng = np.random.default_rng(seed)
    agree = 0
    total = 0
    for k in range(instances):
        if k % 3 == 2:
            ok = _oracle_real_instance(rng)
        else:
            ok = _oracle_matrix_instance(rng)
        agree += int(ok)
        total += 1
    print(f"oracle agreement: {agree}/{total}")
    return 0 if agree == total else 2


def _oracle_matrix_instance(rng):
    n_half = int(rng.integers(2, 9))
    n = 2 * n_half + 1
    # random-walk trajectories on the circle and a quantile radius
    xs = np.cumsum(rng.normal(0, 0.08, size=n)) % 1.0
    ys = (np.cumsum(rng.normal(0, 0.08, size=n)) + rng.random()) % 1.0
    d = np.abs(xs[:, None] - ys[None, :]) % 1.0
    d = np.minimum(d, 1.0 - d)
    delta = float(np.quantile(d, rng.uniform(0.2, 0.9)))
    M = d <= delta
    got = bool(dp_member_matrix(M, n_half, n_half))
    want = bruteforce_matrix(M, n_half, n_half)
    return got == want


def _oracle_real_instance(rng):
    from .systems import build_system

    if rng.random() < 0.5:
        flow = build_system({"kind": "circle_rotation", "omega": 1.0})
        x = flow.space.point(rng.random(1))
        y = flow.space.point(rng.random(1))
        delta = float(rng.uniform(0.02, 0.4))
    else:
        flow = build_system({"kind": "shift_suspension", "W": 20})
        s = flow.space
        bx = s.base_space.point_from_mask(int(rng.integers(0, 1 << 41)))
        by = s.base_space.point_from_mask(int(rng.integers(0, 1 << 41)))
        x = s.canonicalize(bx, float(rng.random()))
        y = s.canonicalize(by, float(rng.random()))
        delta = float(rng.uniform(0.05, 0.6))
    n_half = int(rng.integers(2, 9))
    step = rng.choice([0.25, 0.5, 1.0])
    q = BallQuery(delta=delta, horizon=n_half * step, grid_step=step)
    got = flow_ball_member(flow, x, y, q)
    want = flow_ball_member_bruteforce(flow, x, y, q)
    return got == want


if __name__ == "__main__":
    sys.exit(main())
