"""Command-line front end for the boundary-potential eigenvalue toolkit.

Subcommands
-----------
``solve``
    Lowest eigenpair for a fixed potential; writes the eigenpair JSON and a
    boundary-trace CSV ``(s, u)``.
``optimize``
    Alternating eigensolve / mass-constrained refill; writes the trace JSON,
    an ``(iter, lambda)`` CSV, and the final potential.
``sigma-sweep``
    Runs ``optimize`` across an ascending list of couplings and compares
    against the hard-constraint (pinned-trace) eigenvalue on the support of
    the strongest-coupling result; writes one CSV.
``shape-deriv``
    Endpoint-derivative formula versus its finite-difference oracle.
``symmetry-check``
    Five random-start optimizations on a disk; succeeds when they agree.

All commands read a single JSON config (``--config``).  Configs are
versioned and validated fail-closed: unknown keys are rejected so typos in
experiment scripts surface immediately.  Exit codes are a stable contract:
0 success, 1 usage/config error, 2 numerical failure.  Output files are
written atomically (temp file + rename) and, seeds being part of the
config, re-runs are byte-identical except for ``timestamp`` fields.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .assembly import BoundaryDensity, ProblemParams, density_to_json, load_density
from .eigensolver import (
    EigenPair,
    SolverOptions,
    eigenpair_to_json,
    solve_dirichlet,
    solve_linear,
    solve_nonlinear,
)
from .errors import (
    InfeasibleConstraintError,
    MeshParseError,
    MeshResourceError,
    MeshTopologyError,
    NonConvergenceError,
    RegionCollisionError,
)
from .mesh import Mesh, RegionSpec, generate_disk, generate_rectangle, load_mesh_file
from .rearrange import (
    arc_defect,
    binarize,
    cap_indicator,
    optimize_potential,
    random_admissible,
    support_region,
    trace_to_json,
)
from .shapederiv import (
    DEFAULT_FD_STEPS,
    TangentField,
    report_to_json,
    shape_derivative_fd,
)

__all__ = ["main"]

CONFIG_VERSION = 1

#: symmetry-check passes iff all final eigenvalues agree this tightly ...
SYMMETRY_LAMBDA_RTOL = 1e-6
#: ... and every arc defect is at most this many boundary edge lengths.
SYMMETRY_DEFECT_EDGE_FACTOR = 2.0
#: shape-deriv exits 0 iff formula and oracle agree this tightly.
SHAPE_DERIV_MAX_REL_ERROR = 0.05

_EXIT_OK = 0
_EXIT_CONFIG = 1
_EXIT_NUMERICAL = 2


class ConfigError(ValueError):
    """Invalid command line or config file content (exit code 1)."""


# --------------------------------------------------------------------------
# config plumbing


def _check_keys(obj: object, allowed: set[str], context: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{context} must be a JSON object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {context}: {', '.join(unknown)} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )
    return obj


def _number(obj: dict, key: str, context: str, required: bool = True) -> float | None:
    if key not in obj or obj[key] is None:
        if required:
            raise ConfigError(f"{context} requires a numeric '{key}'")
        return None
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"'{key}' in {context} must be a number")
    return float(val)


def _integer(obj: dict, key: str, context: str, default: int | None = None) -> int | None:
    if key not in obj or obj[key] is None:
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"'{key}' in {context} must be an integer")
    return val


def _string(obj: dict, key: str, context: str) -> str:
    val = obj.get(key)
    if not isinstance(val, str):
        raise ConfigError(f"{context} requires a string '{key}'")
    return val


def load_config(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if data.get("version") != CONFIG_VERSION:
        raise ConfigError(
            f"config 'version' must be {CONFIG_VERSION}, got {data.get('version')!r}"
        )
    return data


def build_mesh(cfg: dict) -> Mesh:
    if "geometry" not in cfg:
        raise ConfigError("config requires a 'geometry' object")
    geom = _check_keys(
        cfg["geometry"],
        {"type", "h", "width", "height", "target_h", "path"},
        "geometry",
    )
    kind = geom.get("type")
    if kind == "disk":
        _check_keys(geom, {"type", "h"}, "disk geometry")
        return generate_disk(_number(geom, "h", "disk geometry"))
    if kind == "rectangle":
        _check_keys(geom, {"type", "width", "height", "target_h"}, "rectangle geometry")
        return generate_rectangle(
            _number(geom, "width", "rectangle geometry"),
            _number(geom, "height", "rectangle geometry"),
            _number(geom, "target_h", "rectangle geometry"),
        )
    if kind == "mesh_file":
        _check_keys(geom, {"type", "path"}, "mesh-file geometry")
        return load_mesh_file(Path(_string(geom, "path", "mesh-file geometry")))
    raise ConfigError(
        f"geometry 'type' must be one of disk, rectangle, mesh_file; got {kind!r}"
    )


def build_params(cfg: dict) -> ProblemParams:
    raw = cfg.get("params", {})
    _check_keys(raw, {"p", "sigma", "eps_reg"}, "params")
    p = _number(raw, "p", "params", required=False)
    sigma = _number(raw, "sigma", "params", required=False)
    eps = _number(raw, "eps_reg", "params", required=False)
    return ProblemParams(
        p=2.0 if p is None else p,
        sigma=0.0 if sigma is None else sigma,
        eps_reg=eps,
    )


def build_solver_options(cfg: dict) -> SolverOptions:
    raw = cfg.get("solver", {})
    _check_keys(raw, {"tol", "max_iters", "seed"}, "solver")
    tol = _number(raw, "tol", "solver", required=False)
    max_iters = _integer(raw, "max_iters", "solver")
    seed = _integer(raw, "seed", "solver", default=0)
    kwargs = {"tol": tol, "seed": seed}
    if max_iters is not None:
        kwargs["max_iters"] = max_iters
    return SolverOptions(**kwargs)


def build_potential(cfg: dict, mesh: Mesh) -> BoundaryDensity:
    if "potential" not in cfg:
        raise ConfigError("config requires a 'potential' object")
    raw = _check_keys(
        cfg["potential"],
        {"type", "path", "value", "angle", "mass", "seed"},
        "potential",
    )
    kind = raw.get("type")
    if kind == "file":
        _check_keys(raw, {"type", "path"}, "file potential")
        return load_density(mesh, Path(_string(raw, "path", "file potential")))
    if kind == "constant":
        _check_keys(raw, {"type", "value"}, "constant potential")
        return BoundaryDensity.constant(mesh, _number(raw, "value", "constant potential"))
    if kind == "cap":
        _check_keys(raw, {"type", "angle", "mass"}, "cap potential")
        _, phi = cap_indicator(
            mesh,
            _number(raw, "angle", "cap potential"),
            _number(raw, "mass", "cap potential"),
        )
        return phi
    if kind == "random":
        _check_keys(raw, {"type", "seed", "mass"}, "random potential")
        seed = _integer(raw, "seed", "random potential", default=0)
        return random_admissible(mesh, _number(raw, "mass", "random potential"), seed)
    raise ConfigError(
        f"potential 'type' must be one of file, constant, cap, random; got {kind!r}"
    )


def _mass(cfg: dict, mesh: Mesh) -> float:
    a = _number(cfg, "mass", "config")
    if not 0.0 <= a <= mesh.perimeter:
        raise ConfigError(
            f"'mass' must lie in [0, perimeter={mesh.perimeter!r}], got {a!r}"
        )
    return a


def build_region(cfg: dict, mesh: Mesh) -> RegionSpec:
    if "region" not in cfg:
        raise ConfigError("config requires a 'region' object")
    raw = _check_keys(cfg["region"], {"intervals"}, "region")
    intervals = raw.get("intervals")
    if not isinstance(intervals, list) or not intervals:
        raise ConfigError("region 'intervals' must be a non-empty list")
    pairs = []
    for item in intervals:
        if (
            not isinstance(item, list)
            or len(item) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in item)
        ):
            raise ConfigError(
                "each region interval must be a [s_begin, s_end] number pair"
            )
        pairs.append((float(item[0]), float(item[1])))
    return RegionSpec.from_intervals(pairs, mesh.perimeter)


def build_tangent(cfg: dict, region: RegionSpec) -> TangentField:
    if "tangent" not in cfg:
        raise ConfigError("config requires a 'tangent' object")
    raw = _check_keys(cfg["tangent"], {"speeds"}, "tangent")
    speeds = raw.get("speeds")
    if not isinstance(speeds, list) or len(speeds) != len(region.arcs):
        raise ConfigError(
            "tangent 'speeds' must list one [v_begin, v_end] pair per region arc"
        )
    pairs = []
    for item in speeds:
        if (
            not isinstance(item, list)
            or len(item) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in item)
        ):
            raise ConfigError("each tangent speed entry must be a [v_begin, v_end] pair")
        pairs.append((float(item[0]), float(item[1])))
    return TangentField(region, tuple(pairs))


# --------------------------------------------------------------------------
# output plumbing


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_json(path: Path, obj: object) -> None:
    _write_atomic(path, json.dumps(obj, indent=2) + "\n")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _csv_text(header: list[str], rows: list[list[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _solve_fixed_potential(
    mesh: Mesh,
    phi: BoundaryDensity,
    params: ProblemParams,
    opts: SolverOptions,
    start=None,
) -> EigenPair:
    if params.p == 2.0:
        return solve_linear(mesh, phi, params.sigma, opts=opts, start=start)
    return solve_nonlinear(mesh, phi, params, opts=opts, start=start)


# --------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: dict, out_dir: Path, jobs: int) -> int:
    mesh = build_mesh(cfg)
    params = build_params(cfg)
    opts = build_solver_options(cfg)
    phi = build_potential(cfg, mesh)

    pair = _solve_fixed_potential(mesh, phi, params, opts)

    record = eigenpair_to_json(pair)
    record["timestamp"] = _timestamp()
    _write_json(out_dir / "eigenpair.json", record)

    loop = mesh.boundary_vertices
    rows = [
        [float(mesh.boundary_vertex_arclength[k]), float(pair.u.values[loop[k]])]
        for k in range(len(loop))
    ]
    _write_atomic(out_dir / "boundary_trace.csv", _csv_text(["s", "u"], rows))

    print(f"lambda = {pair.lam!r}")
    print(f"converged = {pair.converged} after {pair.iterations} iterations")
    return _EXIT_OK if pair.converged else _EXIT_NUMERICAL


def _run_optimize(cfg: dict, mesh: Mesh, params: ProblemParams, opts: SolverOptions):
    a = _mass(cfg, mesh)
    phi0 = build_potential(cfg, mesh) if "potential" in cfg else None
    max_outer = _integer(cfg, "max_outer", "config", default=100)
    outer_tol = _number(cfg, "outer_tol", "config", required=False)
    return optimize_potential(
        mesh,
        params,
        a,
        opts=opts,
        phi0=phi0,
        max_outer=max_outer,
        outer_tol=outer_tol,
    )


def cmd_optimize(cfg: dict, out_dir: Path, jobs: int, binarize_output: bool = False) -> int:
    mesh = build_mesh(cfg)
    params = build_params(cfg)
    opts = build_solver_options(cfg)

    trace = _run_optimize(cfg, mesh, params, opts)

    final = trace.final_potential
    if binarize_output:
        final = binarize(mesh, final)

    _write_json(out_dir / "trace.json", trace_to_json(trace))
    rows = [[k, float(lam)] for k, lam in enumerate(trace.lambdas)]
    _write_atomic(out_dir / "trace.csv", _csv_text(["iter", "lambda"], rows))
    _write_json(out_dir / "final_potential.json", density_to_json(final))

    print(
        f"final lambda = {trace.final_lambda!r} after {trace.outer_iterations} "
        f"outer iterations (converged={trace.converged})"
    )
    return _EXIT_OK if trace.converged else _EXIT_NUMERICAL


def cmd_sigma_sweep(cfg: dict, out_dir: Path, jobs: int) -> int:
    mesh = build_mesh(cfg)
    params = build_params(cfg)
    opts = build_solver_options(cfg)

    sigma_list = cfg.get("sigma_list")
    if (
        not isinstance(sigma_list, list)
        or not sigma_list
        or any(isinstance(s, bool) or not isinstance(s, (int, float)) for s in sigma_list)
    ):
        raise ConfigError("sigma-sweep requires a non-empty numeric 'sigma_list'")
    sigmas = [float(s) for s in sigma_list]
    if any(s <= 0 for s in sigmas) or any(
        b <= a for a, b in zip(sigmas, sigmas[1:])
    ):
        raise ConfigError("'sigma_list' must be strictly ascending and positive")

    csv_path = out_dir / "sweep.csv"
    header = ["sigma", "Lambda_sigma", "Lambda_inf_reference"]

    def one(sigma: float):
        return _run_optimize(cfg, mesh, replace(params, sigma=sigma), opts)

    traces = []
    try:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(one, s) for s in sigmas]
            for fut in futures:
                traces.append(fut.result())
    except (NonConvergenceError, InfeasibleConstraintError) as exc:
        # Flush what completed before the failure so the sweep is inspectable.
        rows = [
            [s, float(tr.final_lambda), ""] for s, tr in zip(sigmas, traces)
        ]
        _write_atomic(csv_path, _csv_text(header, rows))
        print(f"numerical failure during sweep: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL

    # The reference region must contain the optimizer's full support --
    # fractional end edges included -- so that the final potential is
    # dominated by the region's indicator and the hard-constraint eigenvalue
    # is a true upper bound for every coupling in the sweep.
    e_ref = support_region(mesh, traces[-1].final_potential, threshold=0.0)
    ref_pair = solve_dirichlet(mesh, e_ref, params)

    rows = [
        [s, float(tr.final_lambda), float(ref_pair.lam)]
        for s, tr in zip(sigmas, traces)
    ]
    _write_atomic(csv_path, _csv_text(header, rows))

    record = eigenpair_to_json(ref_pair)
    record["timestamp"] = _timestamp()
    _write_json(out_dir / "reference_eigenpair.json", record)

    for s, tr in zip(sigmas, traces):
        print(
            f"sigma={s!r}: Lambda={tr.final_lambda!r} "
            f"gap_to_reference={ref_pair.lam - tr.final_lambda!r}"
        )
    return _EXIT_OK


def cmd_shape_deriv(cfg: dict, out_dir: Path, jobs: int) -> int:
    mesh = build_mesh(cfg)
    params = build_params(cfg)
    opts = build_solver_options(cfg)
    region = build_region(cfg, mesh)
    tangent = build_tangent(cfg, region)

    steps = cfg.get("fd_steps", list(DEFAULT_FD_STEPS))
    if not isinstance(steps, list) or any(
        isinstance(t, bool) or not isinstance(t, (int, float)) for t in steps
    ):
        raise ConfigError("'fd_steps' must be a list of numbers")
    sign = _number(cfg, "sign_convention", "config", required=False)
    sign = 1.0 if sign is None else sign
    if sign not in (1.0, -1.0):
        raise ConfigError("'sign_convention' must be +1 or -1")

    try:
        report = shape_derivative_fd(
            mesh,
            region,
            tangent,
            params,
            steps=[float(t) for t in steps],
            opts=opts,
            sign_convention=sign,
        )
    except ValueError as exc:
        # Step-list validation failures are config errors, and the region/
        # tangent consistency guards cannot fire here (both built together).
        raise ConfigError(str(exc)) from exc

    record = report_to_json(report)
    record["timestamp"] = _timestamp()
    _write_json(out_dir / "derivative_report.json", record)

    print(f"formula_value = {report.formula_value!r}")
    for t, diff in report.fd_table:
        print(f"  t={t!r}: central_difference={diff!r}")
    print(f"fd_value (extrapolated) = {report.fd_value!r}")
    print(f"sign_consistent = {report.sign_consistent}")
    print(f"relative_error = {report.relative_error!r}")
    if report.vertex_crossings:
        print(
            "note: a finite-difference step moved an endpoint across a mesh "
            "vertex; central differences are degraded at this step size",
            file=sys.stderr,
        )
    ok = report.relative_error <= SHAPE_DERIV_MAX_REL_ERROR
    return _EXIT_OK if ok else _EXIT_NUMERICAL


def cmd_symmetry_check(cfg: dict, out_dir: Path, jobs: int) -> int:
    mesh = build_mesh(cfg)
    if mesh.kind != "disk":
        print("symmetry-check requires disk geometry", file=sys.stderr)
        return _EXIT_CONFIG
    params = build_params(cfg)
    opts = build_solver_options(cfg)
    a = _mass(cfg, mesh)
    max_outer = _integer(cfg, "max_outer", "config", default=100)
    outer_tol = _number(cfg, "outer_tol", "config", required=False)

    seeds = [opts.seed + k for k in range(5)]

    def one(seed: int):
        trace = optimize_potential(
            mesh,
            params,
            a,
            opts=replace(opts, seed=seed),
            phi0="random",
            max_outer=max_outer,
            outer_tol=outer_tol,
        )
        return (
            float(trace.final_lambda),
            float(arc_defect(mesh, trace.final_potential)),
            bool(trace.converged),
        )

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(one, seeds))

    lambdas = [r[0] for r in results]
    defects = [r[1] for r in results]
    spread = (max(lambdas) - min(lambdas)) / max(abs(sum(lambdas) / len(lambdas)), 1e-300)
    defect_budget = SYMMETRY_DEFECT_EDGE_FACTOR * mesh.max_boundary_edge_length
    passed = spread <= SYMMETRY_LAMBDA_RTOL and all(d <= defect_budget for d in defects)

    record = {
        "seeds": seeds,
        "lambdas": lambdas,
        "arc_defects": defects,
        "converged": [r[2] for r in results],
        "lambda_relative_spread": spread,
        "defect_budget": defect_budget,
        "passed": passed,
        "timestamp": _timestamp(),
    }
    _write_json(out_dir / "symmetry_report.json", record)

    for seed, (lam, defect, conv) in zip(seeds, results):
        print(f"seed={seed}: lambda={lam!r} arc_defect={defect!r} converged={conv}")
    print(f"lambda relative spread = {spread!r} (tolerance {SYMMETRY_LAMBDA_RTOL!r})")
    print(f"max arc defect = {max(defects)!r} (budget {defect_budget!r})")
    print("PASS" if passed else "FAIL")
    return _EXIT_OK if passed else _EXIT_NUMERICAL


# --------------------------------------------------------------------------
# entry point

_COMMANDS = {
    "solve": (
        cmd_solve,
        {"version", "geometry", "params", "potential", "solver", "output_dir"},
    ),
    "optimize": (
        cmd_optimize,
        {
            "version",
            "geometry",
            "params",
            "potential",
            "mass",
            "solver",
            "output_dir",
            "max_outer",
            "outer_tol",
        },
    ),
    "sigma-sweep": (
        cmd_sigma_sweep,
        {
            "version",
            "geometry",
            "params",
            "potential",
            "mass",
            "solver",
            "output_dir",
            "max_outer",
            "outer_tol",
            "sigma_list",
        },
    ),
    "shape-deriv": (
        cmd_shape_deriv,
        {
            "version",
            "geometry",
            "params",
            "solver",
            "output_dir",
            "region",
            "tangent",
            "fd_steps",
            "sign_convention",
        },
    ),
    "symmetry-check": (
        cmd_symmetry_check,
        {
            "version",
            "geometry",
            "params",
            "mass",
            "solver",
            "output_dir",
            "max_outer",
            "outer_tol",
        },
    ),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="steklov",
        description="First eigenvalue of a boundary-weighted p-Laplacian "
        "problem: solve, optimize the potential, and validate derivatives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument(
            "--jobs",
            type=int,
            default=1,
            help="worker threads for sweeps and multistart runs",
        )
        cmd.add_argument(
            "--out", default=None, help="output directory (overrides config)"
        )
        if name == "optimize":
            cmd.add_argument(
                "--binarize",
                action="store_true",
                help="write the final potential as a 0/1 indicator",
            )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler, allowed = _COMMANDS[args.command]
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")

        cfg = load_config(Path(args.config))
        _check_keys(cfg, allowed, "config")

        if "output_dir" in cfg and not isinstance(cfg["output_dir"], str):
            raise ConfigError("'output_dir' must be a string")
        out_dir = Path(args.out) if args.out else Path(cfg.get("output_dir", "."))
        out_dir.mkdir(parents=True, exist_ok=True)

        if args.command == "optimize":
            return handler(cfg, out_dir, args.jobs, binarize_output=args.binarize)
        return handler(cfg, out_dir, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (MeshParseError, MeshTopologyError, MeshResourceError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except ValueError as exc:
        # Argument validation from the library (bad p, masses, ranges, ...)
        # is config-driven here.
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (NonConvergenceError, InfeasibleConstraintError, RegionCollisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
