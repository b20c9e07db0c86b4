"""Command-line interface: scenario ingestion, solving, simulation, CSV output.

Exit codes: 0 all requested outputs written, 2 audit/precondition failure,
3 solver failure (singular Riccati driver, no valid F), 4 scenario/plan
schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import expm

from . import presets
from .checks import assumption_audit
from .errors import (
    CrossExecError,
    NoValidFError,
    ShapeError,
    SingularDriverError,
)
from .lindyn import ExecutionPlan, cost_quadratic_form, pathwise_cost, risk_cost
from .model import MarketSpec, derive_coefficients
from .montecarlo import asymmetric_roundtrip, blowup_demo, path_increments
from .optimal import OptimalSolution, solve_execution

EXIT_OK = 0
EXIT_AUDIT = 2
EXIT_SOLVER = 3
EXIT_SCHEMA = 4

_TOP_KEYS = {
    "n", "m", "T", "O", "lambda0", "mu", "sigma", "rho", "Xi",
    "xi", "zeta", "x0", "d0", "grid_steps", "sim",
}
_SIM_KEYS = {"n_paths", "seed"}
_TABLE_KEYS = {"times", "values"}


class SchemaError(ValueError):
    """Scenario document violates the schema."""


def _as_float_matrix(raw, n_rows: int, n_cols: int, name: str) -> list[list[float]]:
    arr = np.asarray(raw, dtype=float)
    if arr.shape == (n_rows * n_cols,):
        arr = arr.reshape(n_rows, n_cols)
    if arr.shape != (n_rows, n_cols):
        raise SchemaError(f"{name} must be {n_rows}x{n_cols} (nested or flat row-major)")
    return [[float(v) for v in row] for row in arr]


def _as_float_vector(raw, n: int, name: str) -> list[float]:
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (n,):
        raise SchemaError(f"{name} must be a length-{n} vector")
    return [float(v) for v in arr]


def _normalize_time_field(raw, shape_fn, name: str):
    """Constant value or {'times': [...], 'values': [...]} piecewise table."""
    if isinstance(raw, dict):
        extra = set(raw) - _TABLE_KEYS
        if extra or set(raw) != _TABLE_KEYS:
            raise SchemaError(f"{name} table must have exactly keys times/values")
        times = [float(t) for t in raw["times"]]
        if not times or times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise SchemaError(f"{name} table times must start at 0 and increase")
        values = [shape_fn(v) for v in raw["values"]]
        if len(values) != len(times):
            raise SchemaError(f"{name} table values length must match times")
        return {"times": times, "values": values}
    return shape_fn(raw)


def parse_scenario(doc) -> dict:
    """Validate and normalize a scenario document (dict or JSON text/path)."""
    if isinstance(doc, (str, Path)):
        text = Path(doc).read_text() if Path(str(doc)).exists() else str(doc)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("scenario must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown scenario keys: {sorted(unknown)}")
    missing = (_TOP_KEYS - {"sim"}) - set(doc)
    if missing:
        raise SchemaError(f"missing scenario keys: {sorted(missing)}")
    try:
        n = int(doc["n"])
        m = int(doc["m"])
        grid_steps = int(doc["grid_steps"])
        horizon = float(doc["T"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad scalar field: {exc}") from exc
    if n < 1 or m < 1:
        raise SchemaError("n and m must be positive integers")
    if grid_steps < 2:
        raise SchemaError("grid_steps must be at least 2")
    if not horizon > 0.0:
        raise SchemaError("T must be positive")

    out = {
        "n": n,
        "m": m,
        "T": horizon,
        "O": _as_float_matrix(doc["O"], n, n, "O"),
        "lambda0": _as_float_vector(doc["lambda0"], n, "lambda0"),
        "mu": _normalize_time_field(doc["mu"], lambda v: _as_float_vector(v, n, "mu"), "mu"),
        "sigma": _normalize_time_field(
            doc["sigma"], lambda v: _as_float_matrix(v, n, m, "sigma"), "sigma"
        ),
        "rho": _normalize_time_field(
            doc["rho"], lambda v: _as_float_matrix(v, n, n, "rho"), "rho"
        ),
        "Xi": _normalize_time_field(
            doc["Xi"], lambda v: _as_float_matrix(v, n, n, "Xi"), "Xi"
        ),
        "xi": _as_float_vector(doc["xi"], n, "xi"),
        "zeta": _normalize_time_field(
            doc["zeta"], lambda v: _as_float_vector(v, n, "zeta"), "zeta"
        ),
        "x0": _as_float_vector(doc["x0"], n, "x0"),
        "d0": _as_float_vector(doc["d0"], n, "d0"),
        "grid_steps": grid_steps,
    }
    if "sim" in doc:
        sim = doc["sim"]
        if not isinstance(sim, dict) or set(sim) - _SIM_KEYS:
            raise SchemaError("sim must be an object with keys n_paths/seed")
        out["sim"] = {
            "n_paths": int(sim.get("n_paths", 1)),
            "seed": int(sim.get("seed", 0)),
        }
    return out


def serialize_scenario(scn: dict) -> str:
    return json.dumps(scn, indent=2, sort_keys=True)


def _time_field_to_callable(field, to_array):
    if isinstance(field, dict):
        times = np.asarray(field["times"], dtype=float)
        values = [to_array(v) for v in field["values"]]

        def fn(t):
            idx = int(np.searchsorted(times, t, side="right") - 1)
            return values[max(idx, 0)]

        return fn
    const = to_array(field)
    return lambda t: const


def scenario_to_spec(scn: dict, grid_override: Optional[int] = None) -> MarketSpec:
    n, m = scn["n"], scn["m"]
    vec = lambda v: np.asarray(v, dtype=float)
    return MarketSpec(
        n=n,
        m=m,
        T=scn["T"],
        O=np.asarray(scn["O"], dtype=float),
        lambda0=np.asarray(scn["lambda0"], dtype=float),
        mu=_time_field_to_callable(scn["mu"], vec),
        sigma=_time_field_to_callable(scn["sigma"], vec),
        rho=_time_field_to_callable(scn["rho"], vec),
        Xi=_time_field_to_callable(scn["Xi"], vec),
        xi=np.asarray(scn["xi"], dtype=float),
        zeta=_time_field_to_callable(scn["zeta"], vec),
        x0=np.asarray(scn["x0"], dtype=float),
        d0=np.asarray(scn["d0"], dtype=float),
        grid_steps=grid_override or scn["grid_steps"],
    )


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_solution_csv(path: Path, spec: MarketSpec, sol: OptimalSolution,
                       extra_comments: tuple[str, ...] = ()) -> None:
    """Solve output: t, X_1..X_n, D_1..D_n, H_1..H_n; row 0 holds (t-) values."""
    n = spec.n
    names = (["t"] + [f"X_{j + 1}" for j in range(n)]
             + [f"D_{j + 1}" for j in range(n)] + [f"H_{j + 1}" for j in range(n)])
    rows = []
    rows.append([0.0, *spec.x0, *spec.d0, *sol.state.values[0]])
    for i in range(spec.grid_steps):
        rows.append([
            spec.times[i], *sol.plan.values[i], *sol.deviation.values[i], *sol.state.values[i],
        ])
    rows.append([
        spec.T, *sol.plan.terminal, *sol.deviation.terminal, *sol.state.values[-1],
    ])
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# optimal_cost={_fmt(sol.cost)}\n")
        for line in extra_comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_table_csv(path: Path, names: list[str], rows: list[list[float]],
                    comments: tuple[str, ...] = ()) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path: Path) -> tuple[list[str], np.ndarray, list[str]]:
    """Read a solver CSV: (column names, data array, comment lines)."""
    comments, header, data = [], None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif header is None:
                header = line.split(",")
            else:
                data.append([float(v) for v in line.split(",")])
    if header is None:
        raise SchemaError(f"{path}: no header row")
    return header, np.asarray(data), comments


def read_plan_csv(path: Path, spec: MarketSpec) -> ExecutionPlan:
    """Plan from a CSV with t and X_1..X_n columns (solve output round-trips)."""
    header, data, _ = read_csv(path)
    try:
        cols = [header.index(f"X_{j + 1}") for j in range(spec.n)]
    except ValueError as exc:
        raise SchemaError(f"{path}: missing X columns: {exc}") from exc
    if data.shape[0] != spec.grid_steps + 2:
        raise SchemaError(
            f"{path}: expected {spec.grid_steps + 2} rows for grid_steps={spec.grid_steps}, "
            f"got {data.shape[0]}"
        )
    x_cols = data[:, cols]
    plan = ExecutionPlan(x_pre=x_cols[0], values=x_cols[1:-1], terminal=x_cols[-1])
    if np.max(np.abs(plan.terminal - spec.xi)) > 1e-9 * (1.0 + np.max(np.abs(spec.xi))):
        raise SchemaError(f"{path}: plan terminal does not match the scenario target xi")
    return plan


def _load_spec(args) -> MarketSpec:
    scn = parse_scenario(Path(args.scenario))
    spec = scenario_to_spec(scn, grid_override=getattr(args, "grid", None))
    return spec


def _gate_audit(spec: MarketSpec, coeffs, force: bool) -> None:
    report = assumption_audit(spec, coeffs)
    if not report.passed and not force:
        for line in report.lines():
            print(line, file=sys.stderr)
        raise _AuditFailure("assumption audit failed (rerun with --force to override)")


class _AuditFailure(RuntimeError):
    pass


def cmd_solve(args) -> int:
    spec = _load_spec(args)
    coeffs = derive_coefficients(spec)
    if np.any(coeffs.table.sigma != 0.0):
        print("scenario has sigma != 0: use the simulate command", file=sys.stderr)
        return EXIT_AUDIT
    _gate_audit(spec, coeffs, args.force)
    sol = solve_execution(spec, coeffs=coeffs)
    write_solution_csv(Path(args.out), spec, sol)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = parse_scenario(Path(args.scenario))
    spec = scenario_to_spec(scn, grid_override=args.grid)
    sim = scn.get("sim", {"n_paths": 1, "seed": 0})
    n_paths = args.paths or sim["n_paths"]
    seed = args.seed if args.seed is not None else sim["seed"]
    coeffs = derive_coefficients(spec)
    _gate_audit(spec, coeffs, args.force)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sigma_zero = not np.any(coeffs.table.sigma != 0.0)
    for p in range(n_paths):
        if sigma_zero:
            sol = solve_execution(spec, coeffs=coeffs)
        else:
            w = path_increments(seed, p, spec.grid_steps, spec.m, spec.dt)
            sol = solve_execution(spec, coeffs=coeffs, w_path=w)
        write_solution_csv(
            out_dir / f"path_{p:04d}.csv", spec, sol,
            extra_comments=(f"seed={seed} path={p}",),
        )
    return EXIT_OK


def cmd_cost(args) -> int:
    spec = _load_spec(args)
    coeffs = derive_coefficients(spec)
    if np.any(coeffs.table.sigma != 0.0):
        print("cost evaluation needs a deterministic scenario (sigma = 0)", file=sys.stderr)
        return EXIT_AUDIT
    plan = read_plan_csv(Path(args.plan), spec)
    pw = pathwise_cost(spec, coeffs, plan)
    qf = cost_quadratic_form(spec, coeffs, plan)
    rk = risk_cost(spec, plan)
    print(f"pathwise_cost={_fmt(pw)}")
    print(f"quadratic_form_cost={_fmt(qf)}")
    print(f"risk_cost={_fmt(rk)}")
    print(f"total_cost={_fmt(pw + rk)}")
    return EXIT_OK


def cmd_check(args) -> int:
    spec = _load_spec(args)
    coeffs = derive_coefficients(spec)
    report = assumption_audit(spec, coeffs)
    for line in report.lines():
        print(line)
    return EXIT_OK


def _resilience_demo_rows(steps: int) -> tuple[list[list[float]], list[list[float]]]:
    rho = presets.RESILIENCE_RHO
    times = np.linspace(0.0, presets.RESILIENCE_T1, steps + 1)
    trades = [(3.0, 1.0), (1.0, 3.0), (3.0, -1.0), (1.0, -3.0)]
    rows1, rows2 = [], []
    for t in times:
        decay = expm(-rho * t)
        row = [t]
        for dx in trades:
            dev = decay @ np.asarray(dx)
            row.append(dev[0])
            row.append(np.exp(-rho[0, 0] * t) * dx[0])
        rows1.append(row)
        dev = decay @ np.array([10.0, 0.0])
        rows2.append([t, dev[0], dev[1]])
    return rows1, rows2


def _example_spec(fig_id: str, grid: Optional[int]):
    if fig_id == "fig3":
        return presets.crossing_zero_spec(grid_steps=grid or 1000)
    if fig_id in ("fig4", "fig5"):
        return presets.risk_spec(grid_steps=grid or 1000)
    if fig_id in ("fig6", "fig7"):
        return presets.impact_spec(grid_steps=grid or 1000)
    if fig_id == "fig8":
        return presets.impact_spec(sigma_vec=(1.0, 1.0), grid_steps=grid or 1000)
    raise SchemaError(f"no spec for {fig_id}")


def generate_example(fig_id: str, out_dir: Path, grid: Optional[int] = None) -> Path:
    """Regenerate one built-in example CSV; returns the written path."""
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / f"{fig_id}.csv"
    if fig_id == "fig1":
        rows1, _ = _resilience_demo_rows(grid or 500)
        names = ["t"]
        for tag in ("31", "13", "3m1", "1m3"):
            names += [f"D1_{tag}", f"D1_{tag}_base"]
        write_table_csv(out, names, rows1, comments=("deviation after one block trade",))
    elif fig_id == "fig2":
        _, rows2 = _resilience_demo_rows(grid or 500)
        write_table_csv(out, ["t", "D_1", "D_2"], rows2,
                        comments=("deviation after a block trade (10, 0)",))
    elif fig_id in ("fig3", "fig4", "fig5", "fig6", "fig7"):
        spec = _example_spec(fig_id, grid)
        sol = solve_execution(spec)
        write_solution_csv(out, spec, sol)
    elif fig_id == "fig8":
        spec = _example_spec(fig_id, grid)
        coeffs = derive_coefficients(spec)
        w = path_increments(presets.FIG8_SEED, 0, spec.grid_steps, spec.m, spec.dt)
        sol = solve_execution(spec, coeffs=coeffs, w_path=w)
        write_solution_csv(out, spec, sol, extra_comments=(f"seed={presets.FIG8_SEED} path=0",))
    elif fig_id == "asym":
        gamma_tilde = np.array([[1.0, 1.0], [0.0, 1.0]])
        hs = [0.1, 0.05, 0.01, 0.001]
        rows = [
            [h,
             asymmetric_roundtrip(gamma_tilde, np.zeros((2, 2)), 10.0, h),
             asymmetric_roundtrip(gamma_tilde, np.eye(2), 10.0, h)]
            for h in hs
        ]
        write_table_csv(out, ["h", "cost_rho0", "cost_rho_id"], rows,
                        comments=("round-trip cost vs block spacing, N=10",))
    elif fig_id == "blowup":
        ks = [10.0, 20.0, 40.0, 80.0]
        rows = [[k, blowup_demo(0.2, k, np.zeros(2))] for k in ks]
        write_table_csv(out, ["k", "cost"], rows,
                        comments=("blow-up strategy cost vs k, T=0.2, x=0",))
    else:
        raise SchemaError(f"unknown example id {fig_id!r}; choose from {presets.EXAMPLE_IDS}")
    return out


def cmd_example(args) -> int:
    ids = presets.EXAMPLE_IDS if args.id == "all" else (args.id,)
    for fig_id in ids:
        generate_example(fig_id, Path(args.out), grid=args.grid)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossexec",
        description="Multi-asset optimal execution with cross-impact and resilience",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="scenario JSON path")
        p.add_argument("--grid", type=int, default=None, help="override grid_steps")
        p.add_argument("--force", action="store_true", help="bypass the assumption audit")

    p = sub.add_parser("solve", help="optimal strategy/deviation CSV for a deterministic scenario")
    add_common(p)
    p.add_argument("out", help="output CSV path")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("simulate", help="per-path CSVs for (possibly stochastic) scenarios")
    add_common(p)
    p.add_argument("out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--paths", type=int, default=None, help="override scenario path count")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("cost", help="evaluate the cost of a plan CSV under a scenario")
    add_common(p)
    p.add_argument("plan", help="plan CSV (t and X_1..X_n columns)")
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("check", help="print the assumption audit report")
    add_common(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("example", help="regenerate built-in example CSVs")
    p.add_argument("id", help=f"one of {', '.join(presets.EXAMPLE_IDS)} or 'all'")
    p.add_argument("out", help="output directory")
    p.add_argument("--grid", type=int, default=None, help="override grid resolution")
    p.set_defaults(fn=cmd_example)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SingularDriverError, NoValidFError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except _AuditFailure as exc:
        print(f"audit: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except ShapeError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except CrossExecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AUDIT


if __name__ == "__main__":
    sys.exit(main())
