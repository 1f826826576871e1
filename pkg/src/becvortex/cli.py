"""Command-line front end: ``becvortex <command> [flags]``.

Exit status is 0 on success, 1 on invalid input or domain errors, 2 when a
solver did not converge.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import gp
from .flow import chi_at_origin, chi_bound_check, chi_pde_residual
from .ladder import (DEFAULT_DELTA, ScalingContext, frame_factor, omega_ladder, predict_vortex_count,
                     unscale_omega)
from .pattern import (OptimizerConfig, minimize_pattern, positions_csv_rows,
                      result_to_dict)
from .energetics import tilde_transform
from .serialization import atomic_write_text, csv_text, dumps, read_json
from .trap import (DEFAULT_QUADRATURE_RESOLUTION, DomainError, TrapParams,
                   chemical_potential_bisection, tf_normalization_residual)

EXIT_OK, EXIT_DOMAIN, EXIT_NONCONVERGED = 0, 1, 2

COMMANDS = ("tf", "chi", "ladder", "predict", "pattern", "gp-solve", "sweep", "report")

DEFAULTS = {
    "s": "2", "lam": 1.0, "epsilon": None, "delta": DEFAULT_DELTA, "omega": None,
    "omega_min": None, "omega_max": None, "steps": 8, "n": None, "n_max": 5,
    "output": None, "format": "json", "csv": None, "seed": 0, "multistarts": 32,
    "max_iters": 2000, "grad_tol": 1e-10, "resolution": DEFAULT_QUADRATURE_RESOLUTION,
    "nx": None, "ny": None, "snapshot": None, "vortex": [], "mode": "bisect",
    "gp_max_iters": 20000, "inputs": [],
}


class UsageError(Exception):
    pass


class NonConvergence(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_s(text) -> float:
    t = str(text).strip().lower()
    if t in ("flat", "inf", "infinity"):
        return math.inf
    try:
        return float(t)
    except ValueError:
        raise DomainError(f"--s must be a number >= 2 or 'flat' (got {text!r})") from None


def _point(text):
    try:
        x, y = (float(v) for v in str(text).split(","))
    except ValueError:
        raise DomainError(f"vortex position must be 'x,y' (got {text!r})") from None
    return (x, y)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="becvortex", description="Vortex structure of rotating 2D condensates "
                     "in anisotropic homogeneous traps.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, scaling=False):
        p.add_argument("--config", default=None, help="file of key=value lines")
        p.add_argument("--s", dest="s", default=argparse.SUPPRESS, help="trap slope s >= 2, or 'flat'")
        p.add_argument("--lambda", dest="lam", type=float, default=argparse.SUPPRESS)
        p.add_argument("--output", "-o", default=argparse.SUPPRESS)
        p.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
        if scaling:
            p.add_argument("--epsilon", type=float, default=argparse.SUPPRESS)
            p.add_argument("--delta", type=float, default=argparse.SUPPRESS)

    p = sub.add_parser("tf", help="chemical potential and TF normalization")
    common(p)
    p.add_argument("--resolution", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("chi", help="stream function checks")
    common(p, scaling=True)
    p.add_argument("--resolution", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("ladder", help="critical angular velocities")
    common(p, scaling=True)
    p.add_argument("--n-max", dest="n_max", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("predict", help="predicted vortex count")
    common(p, scaling=True)
    p.add_argument("--omega", type=float, default=argparse.SUPPRESS)
    p.add_argument("--omega-min", dest="omega_min", type=float, default=argparse.SUPPRESS)
    p.add_argument("--omega-max", dest="omega_max", type=float, default=argparse.SUPPRESS)
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("pattern", help="minimize the renormalized energy")
    common(p)
    p.add_argument("--n", type=int, default=argparse.SUPPRESS)
    p.add_argument("--omega", type=float, default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--multistarts", type=int, default=argparse.SUPPRESS)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=argparse.SUPPRESS)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=argparse.SUPPRESS)
    p.add_argument("--csv", default=argparse.SUPPRESS, help="positions CSV path")

    for name, hlp in (("gp-solve", "grid GP ground state"), ("sweep", "vortex count versus Omega")):
        p = sub.add_parser(name, help=hlp)
        common(p, scaling=True)
        p.add_argument("--nx", type=int, default=argparse.SUPPRESS)
        p.add_argument("--ny", type=int, default=argparse.SUPPRESS)
        p.add_argument("--gp-max-iters", dest="gp_max_iters", type=int, default=argparse.SUPPRESS)
        if name == "gp-solve":
            p.add_argument("--omega", type=float, default=argparse.SUPPRESS)
            p.add_argument("--vortex", action="append", type=_point, default=argparse.SUPPRESS,
                           help="seed a unit vortex at x,y (raw coordinates); repeatable")
            p.add_argument("--snapshot", default=argparse.SUPPRESS, help="binary field snapshot path")
        else:
            p.add_argument("--omega-min", dest="omega_min", type=float, default=argparse.SUPPRESS)
            p.add_argument("--omega-max", dest="omega_max", type=float, default=argparse.SUPPRESS)
            p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
            p.add_argument("--mode", choices=("bisect", "grid"), default=argparse.SUPPRESS)

    p = sub.add_parser("report", help="join prior outputs into one comparison table")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--output", "-o", default=argparse.SUPPRESS)
    p.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    return parser


def read_config(path) -> dict:
    """Flat key=value file; '#' starts a comment. Keys use flag names without dashes."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for num, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"config line {num}: expected key=value")
            key, value = (v.strip() for v in line.split("=", 1))
            key = key.replace("-", "_")
            out["lam" if key == "lambda" else key] = value
    return out


_TYPES = {"lam": float, "epsilon": float, "delta": float, "omega": float, "omega_min": float,
          "omega_max": float, "steps": int, "n": int, "n_max": int, "seed": int,
          "multistarts": int, "max_iters": int, "grad_tol": float, "resolution": int,
          "nx": int, "ny": int, "gp_max_iters": int}


def resolve_config(argv) -> dict:
    """Merge defaults, then config-file values, then explicit flags."""
    ns = build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError(f"missing command; choose one of {', '.join(COMMANDS)}")
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    cfg = dict(DEFAULTS)
    if getattr(ns, "config", None):
        for k, v in read_config(ns.config).items():
            if k not in DEFAULTS:
                raise DomainError(f"config key {k!r} is not a known option")
            try:
                cfg[k] = _TYPES[k](v) if k in _TYPES else v
            except ValueError:
                raise DomainError(f"config key {k!r}: cannot parse {v!r}") from None
    cfg.update(flags)
    cfg["command"] = ns.command
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _trap(cfg) -> TrapParams:
    return TrapParams(_parse_s(cfg["s"]), float(cfg["lam"]))


def _ctx(cfg) -> ScalingContext:
    if cfg.get("epsilon") is None:
        raise DomainError("--epsilon is required for this command")
    return ScalingContext(float(cfg["epsilon"]), _trap(cfg), float(cfg["delta"]))


def _s_out(trap: TrapParams):
    return "flat" if trap.is_flat else trap.s


def _params(trap, ctx=None, **extra) -> dict:
    d = {"s": _s_out(trap), "lambda": trap.lam}
    if ctx is not None:
        d["epsilon"] = ctx.epsilon
        d["delta"] = ctx.delta
    d.update(extra)
    return d


def _require(cfg, key, flag):
    if cfg.get(key) is None:
        raise DomainError(f"{flag} is required for this command")
    return cfg[key]


def _emit(cfg, doc: dict, csv_header=None, csv_rows=None) -> None:
    """Write the document to --output (JSON, or CSV with --format csv) or to stdout."""
    if cfg.get("format") == "csv":
        if csv_header is None:
            raise DomainError(f"command {cfg['command']} has no CSV form")
        text = csv_text(csv_header, csv_rows)
    else:
        text = dumps(doc)
    out = cfg.get("output")
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


def _write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
        raise DomainError(f"output path {path!r} is not writable")
    atomic_write_text(path, text)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BECVORTEX_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# commands


def cmd_tf(cfg):
    trap = _trap(cfg)
    res = int(cfg["resolution"])
    doc = {"command": "tf", "params": _params(trap),
           "mu": trap.mu, "mu_bisection": chemical_potential_bisection(trap.s, trap.lam),
           "semi_axes": [trap.semi_axis_x, trap.semi_axis_y],
           "resolution": res, "normalization_residual": tf_normalization_residual(trap, res)}
    _emit(cfg, doc)


def cmd_chi(cfg):
    trap = _trap(cfg)
    eps = cfg.get("epsilon")
    grids = (128, 256, 512)
    residuals = [chi_pde_residual(trap, n, epsilon=eps) for n in grids]
    orders = [math.log(a / b, 2) if a > 0 and b > 0 else None
              for a, b in zip(residuals, residuals[1:])]
    xs = np.linspace(-trap.semi_axis_x, trap.semi_axis_x, 101)
    ys = np.linspace(-trap.semi_axis_y, trap.semi_axis_y, 101)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    lhs, rhs, holds = chi_bound_check(X, Y, trap)
    inside = rhs > 0
    doc = {"command": "chi", "params": _params(trap, epsilon=eps),
           "chi_origin": chi_at_origin(trap),
           "bound_holds": bool(np.all(holds)),
           "bound_max_gap": float(np.max((rhs - lhs)[inside])) if inside.any() else 0.0,
           "pde_grids": list(grids), "pde_residuals": residuals, "pde_orders": orders}
    _emit(cfg, doc)


def cmd_ladder(cfg):
    ctx = _ctx(cfg)
    n_max = int(cfg["n_max"])
    if n_max < 1:
        raise DomainError("--n-max must be >= 1")
    lad = omega_ladder(ctx, n_max)
    doc = {"command": "ladder", "params": _params(ctx.trap, ctx),
           "c1": lad.c1, "omega_n": lad.omega_n, "spacing": lad.spacing(),
           "omega_local_stability": lad.omega_local_stability,
           "frame_factor": frame_factor(ctx.epsilon, ctx.trap.s),
           "omega_n_unscaled": [unscale_omega(o, ctx) for o in lad.omega_n]}
    rows = [(n + 1, o) for n, o in enumerate(lad.omega_n)]
    _emit(cfg, doc, ["n", "omega_n"], rows)


def _omega_values(cfg):
    if cfg.get("omega") is not None:
        return [float(cfg["omega"])]
    lo = _require(cfg, "omega_min", "--omega or --omega-min")
    hi = _require(cfg, "omega_max", "--omega-max")
    steps = int(cfg["steps"])
    if steps < 1 or not hi > lo:
        raise DomainError("need --omega-max > --omega-min and --steps >= 1")
    return [float(v) for v in np.linspace(lo, hi, steps + 1)]


def cmd_predict(cfg):
    ctx = _ctx(cfg)
    rows = []
    for om in _omega_values(cfg):
        pred = predict_vortex_count(om, ctx)
        rows.append({"omega": om, **pred.as_dict()})
    doc = {"command": "predict", "params": _params(ctx.trap, ctx), "predictions": rows}
    _emit(cfg, doc)


def cmd_pattern(cfg):
    trap = _trap(cfg)
    n = int(_require(cfg, "n", "--n"))
    omega = float(_require(cfg, "omega", "--omega"))
    opt = OptimizerConfig(n=n, multistarts=int(cfg["multistarts"]), max_iters=int(cfg["max_iters"]),
                          grad_tol=float(cfg["grad_tol"]), seed=int(cfg["seed"]))
    res = minimize_pattern(opt, omega, trap)
    doc = {"command": "pattern", "params": _params(trap), **result_to_dict(res)}
    header, rows = ["x_tilde", "y_tilde"], positions_csv_rows(res)
    _emit(cfg, doc, header, rows)
    # the positions CSV goes alongside a JSON report (and vice versa)
    out = cfg.get("output")
    side = cfg.get("csv")
    if out and cfg.get("format") == "csv":
        _write(str(Path(out).with_suffix(".json")), dumps(doc))
    elif side or out:
        _write(side or str(Path(out).with_suffix(".csv")), csv_text(header, rows))
    if not res.converged:
        raise NonConvergence(f"pattern optimizer: gradient norm {res.grad_norm:.3g} above tolerance")


def _grid_spec(cfg, ctx):
    if cfg.get("nx") is None:
        if cfg.get("ny") is not None:
            raise DomainError("--ny requires --nx")
        return gp.default_grid_spec(ctx)
    return gp.GridSpec(int(cfg["nx"]), None if cfg.get("ny") is None else int(cfg["ny"]))


def cmd_gp_solve(cfg):
    ctx = _ctx(cfg)
    omega = float(_require(cfg, "omega", "--omega"))
    spec = _grid_spec(cfg, ctx)
    seeds = [(tuple(p), 1) for p in cfg.get("vortex") or []]
    rep = gp.solve(spec, ctx, omega, seeds=seeds,
                   options=gp.SolverOptions(max_iters=int(cfg["gp_max_iters"])))
    grid = rep.grid
    doc = {"command": "gp-solve",
           "params": _params(ctx.trap, ctx, omega=omega, nx=grid.nx, ny=grid.ny,
                             lx=grid.lx, ly=grid.ly),
           **rep.as_dict()}
    doc["vortices_tilde"] = [tilde_transform([p], omega, ctx.trap)[0].tolist() for p, _ in rep.vortices]
    rows = [(p[0], p[1], d) for p, d in rep.vortices]
    _emit(cfg, doc, ["x", "y", "winding"], rows)
    snap = cfg.get("snapshot")
    if snap is None and cfg.get("output"):
        snap = str(Path(cfg["output"]).with_suffix(".bin"))
    if snap:
        gp.write_snapshot(snap, grid)
    if not rep.converged:
        raise NonConvergence(f"GP solve: projected gradient {rep.grad_norm:.3g} after "
                             f"{rep.iterations} iterations")


def _count_at(args):
    spec, ctx, om, opts = args
    rep = gp.ground_state(spec, ctx, om, ((), (((0.0, 0.0), 1),)), opts)
    return {"omega": om, "count": sum(abs(d) for _, d in rep.vortices), "energy": rep.energy,
            "converged": rep.converged,
            "vortices": [{"position": list(p), "winding": d} for p, d in rep.vortices]}


def cmd_sweep(cfg):
    ctx = _ctx(cfg)
    spec = _grid_spec(cfg, ctx)
    opts = gp.SolverOptions(max_iters=int(cfg["gp_max_iters"]))
    lo = float(_require(cfg, "omega_min", "--omega-min"))
    hi = float(_require(cfg, "omega_max", "--omega-max"))
    steps = int(cfg["steps"])
    base = {"command": "sweep", "params": _params(ctx.trap, ctx, nx=spec.sizes(ctx.trap)[0]),
            "mode": cfg["mode"]}
    if cfg["mode"] == "bisect":
        res = gp.nucleation_sweep(ctx, (lo, hi), steps, spec, opts)
        doc = {**base, **res.as_dict()}
        evals = doc["evaluations"]
    else:
        if steps < 1 or not hi > lo:
            raise DomainError("need --omega-max > --omega-min and --steps >= 1")
        omegas = [float(v) for v in np.linspace(lo, hi, steps + 1)]
        jobs = [(spec, ctx, om, opts) for om in omegas]
        with ThreadPoolExecutor(min(_threads(), len(jobs))) as ex:
            evals = list(ex.map(_count_at, jobs))
        doc = {**base, "evaluations": evals}
    rows = [(e["omega"], e["count"], e["energy"]) for e in evals]
    _emit(cfg, doc, ["omega", "count", "energy"], rows)


# ---------------------------------------------------------------------------
# report


def _match(pred: np.ndarray, found: np.ndarray):
    """Minimum-total-distance pairing of predicted and detected positions."""
    from scipy.optimize import linear_sum_assignment
    d = np.hypot(pred[:, None, 0] - found[None, :, 0], pred[:, None, 1] - found[None, :, 1])
    rows, cols = linear_sum_assignment(d)
    return [(int(i), int(j), float(d[i, j])) for i, j in zip(rows, cols)]


def _key_params(doc):
    p = doc.get("params", {})
    return {k: p[k] for k in ("s", "lambda", "epsilon") if k in p}


def build_report(docs: list[dict]) -> dict:
    if not docs:
        raise DomainError("report needs at least one input document")
    merged: dict = {}
    for doc in docs:
        for k, v in _key_params(doc).items():
            if k in merged and merged[k] != v:
                raise DomainError(f"incompatible inputs: {k} = {merged[k]!r} and {v!r}")
            merged[k] = v
    by_cmd: dict = {}
    for doc in docs:
        by_cmd.setdefault(doc.get("command"), []).append(doc)

    trap = TrapParams(_parse_s(merged["s"]), float(merged["lambda"])) if "s" in merged else None
    ctx = None
    if trap is not None and "epsilon" in merged:
        delta = next((d["params"]["delta"] for d in docs if "delta" in d.get("params", {})), DEFAULT_DELTA)
        ctx = ScalingContext(float(merged["epsilon"]), trap, float(delta))

    rows: dict = {}

    def row(om):
        return rows.setdefault(float(om), {"omega": float(om)})

    for doc in by_cmd.get("ladder", []):
        for n, om in enumerate(doc["omega_n"], 1):
            row(om)["ladder_n"] = n
    for doc in by_cmd.get("sweep", []):
        for e in doc.get("evaluations", []):
            r = row(e["omega"])
            r["measured_count"] = e["count"]
            if ctx is not None:
                r.update({"predicted_" + k: v for k, v in
                          predict_vortex_count(e["omega"], ctx).as_dict().items()})
        if "omega_star" in doc:
            r = row(doc["omega_star"])
            r["omega_star"] = doc["omega_star"]
            r["ratio_to_log_eps"] = doc["ratio_to_log_eps"]
            r["c1"] = doc["c1"]
    for doc in by_cmd.get("predict", []):
        for p in doc["predictions"]:
            r = row(p["omega"])
            r.update({"predicted_" + k: v for k, v in p.items() if k != "omega"})
    patterns = by_cmd.get("pattern", [])
    for doc in patterns:
        r = row(doc["omega"])
        r["pattern_n"] = doc["n"]
        r["pattern_w"] = doc["w_value"]
        r["constraint_residuals"] = doc["residuals"]
    for doc in by_cmd.get("gp-solve", []):
        om = doc["params"]["omega"]
        r = row(om)
        r["gp_count"] = sum(abs(v["winding"]) for v in doc["vortices"])
        r["gp_energy"] = doc["energy"]
        r["gp_converged"] = doc["converged"]
        same = [p for p in patterns if p["omega"] == om and p["n"] == r["gp_count"]]
        if same and trap is not None and doc["vortices"]:
            pred = np.asarray(same[0]["positions"], float).reshape(-1, 2)
            found = tilde_transform([v["position"] for v in doc["vortices"]], om, trap)
            pairs = _match(pred, found)
            r["position_mismatch"] = [{"pattern": pred[i].tolist(), "detected": found[j].tolist(),
                                       "distance": dist} for i, j, dist in pairs]
            r["max_mismatch"] = max(p[2] for p in pairs)
    table = [rows[k] for k in sorted(rows)]
    return {"command": "report", "params": merged, "rows": table}


def cmd_report(cfg):
    inputs = cfg.get("inputs") or []
    docs = []
    for path in inputs:
        try:
            docs.append(read_json(path))
        except (OSError, ValueError) as exc:
            raise DomainError(f"cannot read input {path!r}: {exc}") from None
    doc = build_report(docs)
    header = ["omega", "ladder_n", "predicted_count", "measured_count", "gp_count", "max_mismatch"]
    rows = [[r.get(h, "") if not isinstance(r.get(h, ""), (int, float)) else r[h] for h in header]
            for r in doc["rows"]]
    _emit(cfg, doc, header, [[v if v != "" else "nan" for v in rw] for rw in rows])


HANDLERS = {"tf": cmd_tf, "chi": cmd_chi, "ladder": cmd_ladder, "predict": cmd_predict,
            "pattern": cmd_pattern, "gp-solve": cmd_gp_solve, "sweep": cmd_sweep,
            "report": cmd_report}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve_config(argv)
        HANDLERS[cfg["command"]](cfg)
    except NonConvergence as exc:
        print(f"becvortex: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except gp.NonConvergenceError as exc:
        print(f"becvortex: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (UsageError, DomainError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"becvortex: error: {msg}", file=sys.stderr)
        return EXIT_DOMAIN
    except RuntimeError as exc:
        print(f"becvortex: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
