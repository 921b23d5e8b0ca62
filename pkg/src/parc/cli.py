"""Command-line front end: ``parc compute|sample|verify|fit|error|plotdata``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import lp
from .bras import (
    BrasResult,
    ErrorProfile,
    EtiError,
    ExpertPlanError,
    Scenario,
    TrajectoryPair,
    buffered_obstacles,
    compute_bras,
    estimate_error,
    find_expert,
    sample_bras,
    target_goal,
    verify_plan,
)
from .models import (
    AffineFit,
    PolynomialParams,
    RankDeficiencyError,
    dubins_model,
    fit_affine_model,
    near_hover_2d_model,
    polynomial_system,
    single_integrator_3d,
)
from .polytope import WORLD_BOX, HPolytope, PolytopeError, chebyshev_center, is_empty, project_onto, vertex_enumeration
from .pwa import PWASystem, RolloutWarning, affinize, grid_points

log = logging.getLogger("parc")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NO_EXPERT = 3
EXIT_ETI = 4
EXIT_NUMERICAL = 5
EXIT_VERIFY = 6
EXIT_RANK = 7

DEFAULT_GRIDS = {"dubins": "1,1,1,1,8", "near-hover-2d": "1,1,1,1,3,1,1,1"}


class ParseError(ValueError):
    pass


class NoExpertError(RuntimeError):
    pass


class VerificationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# file helpers


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def write_json(path, data) -> None:
    # json writes floats with repr, the shortest string that round-trips.
    text = json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)
    Path(path).write_text(text + "\n")


def load_scenario(path) -> Scenario:
    data = read_json(path)
    try:
        return Scenario.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid scenario {path}: {exc}") from exc


def load_profile(path) -> ErrorProfile:
    try:
        return ErrorProfile.from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid error profile {path}: {exc}") from exc


def load_pairs(paths) -> list[TrajectoryPair]:
    pairs = []
    for p in paths:
        data = read_json(p)
        items = data if isinstance(data, list) else data.get("pairs", [data])
        try:
            pairs.extend(TrajectoryPair.from_dict(d) for d in items)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid trajectory file {p}: {exc}") from exc
    if not pairs:
        raise ParseError("no trajectories supplied")
    return pairs


def parse_floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ParseError(f"bad number list {text!r}") from exc


# ---------------------------------------------------------------------------
# system construction


def build_system(model: str, scenario: Scenario, dt: float, tf: float, grid: str | None, t_pk: float = 1.0) -> PWASystem:
    if dt <= 0 or tf <= 0 or abs(tf / dt - round(tf / dt)) > 1e-9:
        raise ParseError(f"dt={dt} must divide tf={tf}")
    domain = scenario.domain()
    lay = scenario.layout
    if model.startswith("affine-fit:"):
        fit = AffineFit.from_dict(read_json(model.split(":", 1)[1]))
        if fit.layout != lay:
            raise ParseError("fitted model layout does not match the scenario")
        return fit.system(domain)
    if model == "polynomial":
        return polynomial_system(PolynomialParams(t_pk, tf), dt, domain)
    models = {"dubins": dubins_model, "integrator3d": single_integrator_3d, "near-hover-2d": near_hover_2d_model}
    if model not in models:
        raise ParseError(f"unknown model {model!r}")
    pm = models[model]()
    if pm.layout.n != lay.n or (pm.layout.n_w, pm.layout.n_k) != (lay.n_w, lay.n_k):
        raise ParseError(f"model {model} does not match the scenario layout")
    counts = parse_floats(grid or DEFAULT_GRIDS.get(model, ",".join(["1"] * lay.n)))
    if len(counts) != lay.n:
        raise ParseError(f"grid needs {lay.n} counts, got {len(counts)}")
    from .bras import box_bounds

    lo, hi = box_bounds(_bounded(domain))
    pts = grid_points(lo, hi, [int(c) for c in counts])
    return affinize(pm, [pts], domain, dt, tf)


def _bounded(P: HPolytope) -> HPolytope:
    from .polytope import clip, is_bounded

    return P if is_bounded(P) else clip(P, WORLD_BOX)


def _system_from_args(args, scenario: Scenario, meta: dict | None = None) -> PWASystem:
    meta = meta or {}
    model = args.model or meta.get("model")
    dt = args.dt if args.dt is not None else meta.get("dt")
    tf = args.tf if args.tf is not None else meta.get("tf", scenario.tf)
    grid = args.grid if args.grid is not None else meta.get("grid")
    if model is None or dt is None:
        raise ParseError("--model and --dt are required")
    return build_system(model, scenario, float(dt), float(tf), grid, args.t_pk)


# ---------------------------------------------------------------------------
# commands


def cmd_compute(args) -> int:
    scenario = load_scenario(args.scenario)
    system = _system_from_args(args, scenario)
    profile = load_profile(args.error_profile) if args.error_profile else None
    lay = scenario.layout
    start = time.perf_counter()
    if args.expert_k is not None:
        if scenario.p0 is None:
            raise ParseError("scenario needs p0 to use --expert-k")
        x0 = lay.augment(scenario.p0, parse_floats(args.expert_k))
    else:
        if scenario.p0 is None:
            raise ParseError("scenario needs p0 for the expert search")
        x0 = None
        if is_empty(target_goal(scenario, profile)):
            # nothing to search for; compute_bras flags the result empty
            x0 = lay.augment(scenario.p0, chebyshev_center(scenario.K)[0])
    if x0 is None:
        x0 = find_expert(system, scenario, scenario.p0, args.expert_budget, args.seed, profile)
        if x0 is None:
            raise NoExpertError(f"no goal-reaching plan among {args.expert_budget} samples")
    try:
        result = compute_bras(
            system,
            scenario,
            x0,
            profile,
            skip_filter=args.skip_filter,
            threads=args.threads,
            tighten_other=args.tighten,
            restrict_regions=args.restrict_regions,
            clip_bound=args.clip,
        )
    except ExpertPlanError as exc:
        raise NoExpertError(str(exc)) from exc
    wall = time.perf_counter() - start
    meta = dict(result.meta)
    meta.update(
        {
            "model": args.model,
            "dt": args.dt,
            "tf": args.tf if args.tf is not None else scenario.tf,
            "grid": args.grid,
            "seed": args.seed,
            "expert_x0": np.asarray(x0).tolist(),
            "scenario": str(args.scenario),
            "error_profile": str(args.error_profile) if args.error_profile else None,
        }
    )
    out = result.to_dict()
    out["meta"] = meta
    write_json(args.out, out)
    write_json(str(args.out) + ".meta.json", {"wall_time_s": wall, "threads": args.threads})
    hits = sum(result.filtered.values())
    print(
        f"mode sequence {list(result.mode_sequence)}; reach rows {result.reach.n_constraints}; "
        f"avoid sets {len(result.avoid)}; filter hits {hits}/{len(result.filtered)}; "
        f"{'EMPTY' if result.empty else 'nonempty'}; {wall:.2f} s"
    )
    return EXIT_OK


def _load_result(path) -> BrasResult:
    try:
        return BrasResult.from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid BRAS result {path}: {exc}") from exc


def _verify_all(args, result: BrasResult, X) -> tuple[list[dict], int]:
    scenario = load_scenario(args.scenario or result.meta.get("scenario"))
    system = _system_from_args(args, scenario, result.meta)
    prof_path = args.error_profile or result.meta.get("error_profile")
    profile = load_profile(prof_path) if prof_path else None
    buffered = buffered_obstacles(scenario, profile, system.n_steps)
    plans = []
    failures = 0
    for x in X:
        rep = verify_plan(system, scenario, profile, x, args.substeps, buffered)
        failures += not rep.passed
        plans.append({"x0": np.asarray(x).tolist(), "passed": rep.passed, "message": rep.message, "states": rep.states.tolist()})
    return plans, failures


def cmd_sample(args) -> int:
    result = _load_result(args.result)
    dim = result.reach.dim
    if args.n == 0:
        write_json(args.out, {"plans": [], "status": "complete", "attempts": 0})
        print("0 plans")
        return EXIT_OK
    if result.empty:
        write_json(args.out, {"plans": [], "status": "empty", "attempts": 0})
        print("reach set is empty; no plans")
        return EXIT_OK
    scenario = load_scenario(args.scenario or result.meta.get("scenario"))
    system = _system_from_args(args, scenario, result.meta)
    samples = sample_bras(result, args.n, args.seed, args.budget, system=system)
    plans, failures = _verify_all(args, result, samples.samples.reshape(-1, dim))
    write_json(args.out, {"plans": plans, "status": samples.status, "attempts": samples.attempts})
    print(f"{len(plans) - failures}/{len(plans)} sampled plans pass ({samples.status}, {samples.attempts} attempts)")
    if failures:
        raise VerificationError(f"{failures} sampled plans failed verification")
    return EXIT_OK


def cmd_verify(args) -> int:
    result = _load_result(args.result)
    data = read_json(args.plans)
    try:
        X = np.array([p["x0"] for p in data["plans"]], dtype=float).reshape(-1, result.reach.dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid plan file: {exc}") from exc
    plans, failures = _verify_all(args, result, X)
    if args.out:
        write_json(args.out, {"plans": plans})
    print(f"{len(plans) - failures}/{len(plans)} plans pass")
    if failures:
        raise VerificationError(f"{failures} plans failed verification")
    return EXIT_OK


def _check_grid(pairs, dt, tf):
    if dt is None or tf is None:
        raise ParseError("--dt and --tf are required")
    if abs(tf / dt - round(tf / dt)) > 1e-9:
        raise ParseError(f"dt={dt} must divide tf={tf}")
    ref = pairs[0].t
    for p in pairs[1:]:
        if p.t.shape != ref.shape or np.max(np.abs(p.t - ref)) > 1e-9:
            raise ParseError("trajectory time grids do not match")


def cmd_fit(args) -> int:
    pairs = load_pairs(args.trajectories)
    _check_grid(pairs, args.dt, args.tf)
    try:
        fit = fit_affine_model(pairs, args.dt, args.tf, args.n_w)
    except RankDeficiencyError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    write_json(args.out, fit.to_dict())
    print(f"fitted {fit.coef.shape[0]} timesteps; max residual {float(np.max(fit.residuals)):.3g}")
    return EXIT_OK


def cmd_error(args) -> int:
    pairs = load_pairs(args.trajectories)
    _check_grid(pairs, args.dt, args.tf)
    if not args.valid_region:
        raise ParseError("--valid-region is required")
    try:
        region = HPolytope.from_dict(read_json(args.valid_region))
        profile = estimate_error(pairs, region, args.dt, args.tf, args.n_w)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from exc
    write_json(args.out, profile.to_dict())
    print(f"e_tf {profile.e_tf.tolist()}; max e_int {profile.e_int.max(axis=0).tolist()} over {len(pairs)} pairs")
    return EXIT_OK


def polygon_ring(P: HPolytope, dims) -> np.ndarray:
    """Counter-clockwise closed vertex ring of the 2-D projection of ``P``."""
    Q = project_onto(P, dims)
    V = vertex_enumeration(Q).vertices
    if len(V) == 0:
        return V.reshape(0, 2)
    c = V.mean(axis=0)
    order = np.lexsort((np.hypot(*(V - c).T), np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0])))
    V = V[order]
    return np.vstack([V, V[:1]])


def _write_ring(path: Path, ring: np.ndarray, names) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in ring:
            w.writerow([repr(float(v)) for v in row])


def cmd_plotdata(args) -> int:
    result = _load_result(args.result)
    dims = [int(v) for v in parse_floats(args.dims)]
    n = result.reach.dim
    if len(dims) != 2 or len(set(dims)) != 2 or any(d < 0 or d >= n for d in dims):
        raise ParseError(f"--dims must name two distinct coordinates in [0, {n})")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"x{dims[0]}", f"x{dims[1]}"]
    _write_ring(out / "reach.csv", polygon_ring(result.reach, dims), names)
    for t, P in enumerate(result.reach_chain):
        _write_ring(out / f"reach_t{t}.csv", polygon_ring(P, dims), names)
    for a in result.avoid:
        _write_ring(out / f"avoid_o{a.obstacle}_t{a.t_index}.csv", polygon_ring(a.polytope, dims), names)
    count = 0
    if args.plans:
        for j, plan in enumerate(read_json(args.plans)["plans"]):
            S = np.asarray(plan["states"], dtype=float)
            with open(out / f"trajectory_{j}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step"] + [f"x{i}" for i in range(S.shape[1])])
                for t, row in enumerate(S):
                    w.writerow([t] + [repr(float(v)) for v in row])
            count += 1
    print(f"wrote {len(result.reach_chain) + 1 + len(result.avoid)} set rings and {count} trajectories to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parc", description="Backward reach-avoid sets for PWA planning models.")
    sub = ap.add_subparsers(dest="command", required=True)

    def system_flags(p, required=False):
        p.add_argument("--scenario", required=required)
        p.add_argument("--model", help="dubins, integrator3d, polynomial, near-hover-2d or affine-fit:<file>")
        p.add_argument("--dt", type=float)
        p.add_argument("--tf", type=float)
        p.add_argument("--grid", help="linearization grid counts per augmented coordinate, comma separated")
        p.add_argument("--t-pk", dest="t_pk", type=float, default=1.0)
        p.add_argument("--error-profile")

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tol-lp", dest="tol_lp", type=float)
        p.add_argument("--clip", type=float, default=WORLD_BOX)

    p = sub.add_parser("compute", help="compute a BRAS")
    system_flags(p, required=True)
    common(p)
    p.add_argument("--expert-k")
    p.add_argument("--expert-budget", type=int, default=512)
    p.add_argument("--skip-filter", action="store_true")
    p.add_argument("--tighten", action="store_true", help="bound non-ETI states by the reach set in avoid sets")
    p.add_argument("--restrict-regions", action="store_true", help="cut reach sets to the mode-sequence regions")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("sample", help="sample and verify plans from a BRAS")
    system_flags(p)
    common(p)
    p.add_argument("--result", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--substeps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify", help="verify plans against a scenario")
    system_flags(p)
    common(p)
    p.add_argument("--result", required=True)
    p.add_argument("--plans", required=True)
    p.add_argument("--substeps", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    for name, func, helptext in (("fit", cmd_fit, "least-squares affine model"), ("error", cmd_error, "tracking-error profile")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--trajectories", nargs="+", required=True)
        p.add_argument("--dt", type=float)
        p.add_argument("--tf", type=float)
        p.add_argument("--n-w", dest="n_w", type=int, default=2)
        if name == "error":
            p.add_argument("--valid-region")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("plotdata", help="2-D vertex rings as CSV")
    common(p)
    p.add_argument("--result", required=True)
    p.add_argument("--dims", default="0,1")
    p.add_argument("--plans")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PARC_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    saved_tol = lp.FEAS_TOL
    if args.tol_lp is not None:
        lp.FEAS_TOL = args.tol_lp
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RolloutWarning)
            return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NoExpertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_EXPERT
    except EtiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ETI
    except VerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except RankDeficiencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (lp.LPError, PolytopeError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        lp.FEAS_TOL = saved_tol


if __name__ == "__main__":
    sys.exit(main())
