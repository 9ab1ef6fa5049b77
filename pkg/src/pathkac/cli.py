"""Command-line runner: ``pathkac <subcommand> [key=value ...]``.

Every subcommand takes a flat set of ``key=value`` parameters validated
against a published schema (``pathkac <subcommand> --help`` lists it).
Reports go to ``<output-dir>/<name>.json``; time series go to CSV files next
to it and wall-clock time to ``<name>.timing.json`` so that the report
itself is byte-identical across reruns.

Exit codes: 0 when every pass flag is true, 1 on a failed flag or a
numerical error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance as acc
from . import feynman_kac as fk
from .diffusion import McConfig, PathBatch, simulate_sde, spec_from_dict
from .errors import PathkacError
from .hermite import HermiteState, project
from .paths import GridPath
from .potential import parse_potential, potential_from_params
from .transform import forward_map, roundtrip_errors, solve_hat, stability_bound

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Key:
    type: type
    default: object
    help: str


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


PATH_KEYS = {
    "path": Key(str, "random", "input path: random | constant | csv"),
    "path_file": Key(str, "", "CSV file with columns t,y1..ym (path=csv)"),
    "m": Key(int, 1, "path dimension for random / constant paths"),
    "T": Key(float, 1.0, "horizon"),
    "dt": Key(float, 1e-3, "grid step"),
    "value": Key(float, 1.0, "level of a constant path"),
    "potential": Key(str, "kind=constant,lambda=0", "potential, e.g. kind=state,name=norm"),
    "coeffs": Key(str, "", "comma-separated coefficients of V for kind=linear"),
    "tol": Key(float, 1e-12, "fixed-point tolerance"),
    "strategy": Key(str, "adaptive", "partition strategy: adaptive | proof"),
}

MC_KEYS = {
    "driver": Key(str, "brownian", "diffusion: brownian | ou"),
    "x0": Key(float, 0.0, "starting point"),
    "theta": Key(float, 1.0, "OU mean reversion"),
    "sigma": Key(float, 1.0, "OU volatility / Brownian scale"),
    "n_paths": Key(int, 20000, "Monte Carlo paths"),
    "dt": Key(float, 1e-3, "time step"),
    "t": Key(float, 1.0, "evaluation time"),
    "N": Key(int, 64, "Hermite truncation order"),
    "vbar": Key(str, "zero", "potential: zero | const | quadratic | linear | cosine"),
    "vbar_a": Key(float, -0.5, "coefficient of the potential (V=a, a x^2, a x, a cos x)"),
}

TEST_FUNCTIONS = {
    "one": lambda x, c, w: np.ones_like(x),
    "gauss": lambda x, c, w: np.exp(-0.5 * ((x - c) / w) ** 2),
    "sech2": lambda x, c, w: 1.0 / np.cosh((x - c) / w) ** 2,
    "sin-gauss": lambda x, c, w: np.sin(x - c) * np.exp(-0.25 * ((x - c) / w) ** 2),
}

F_KEYS = {
    "f": Key(str, "gauss", "test function: " + " | ".join(TEST_FUNCTIONS)),
    "f_center": Key(float, 0.0, "centre of the test function"),
    "f_width": Key(float, 1.0, "width of the test function"),
}

SCHEMAS = {
    "transform": {**PATH_KEYS, "seed": Key(int, 0, "seed for random paths")},
    "roundtrip": {**PATH_KEYS, "seed": Key(int, 0, "seed"), "threshold": Key(float, 1e-9, "pass threshold")},
    "stability": {
        **PATH_KEYS,
        "seed": Key(int, 0, "seed"),
        "pairs": Key(int, 20, "number of perturbed pairs"),
        "perturbation": Key(float, 0.05, "size of the perturbation"),
    },
    "simulate": {
        **{k: MC_KEYS[k] for k in ("driver", "x0", "theta", "sigma", "n_paths", "dt")},
        "T": Key(float, 1.0, "horizon"),
        "seed": Key(int, 0, "seed"),
        "radius": Key(float, math.inf, "lifetime radius"),
        "binary": Key(int, 1, "also write the binary batch file (0/1)"),
    },
    "fk-compare": {
        **MC_KEYS,
        **F_KEYS,
        "seed": Key(int, 0, "seed"),
        "nx": Key(int, 801, "PDE grid points"),
        "pde_dt": Key(float, 1e-3, "PDE time step"),
        "taper": Key(int, 1, "multiply f by a smooth cutoff for the PDE (0/1)"),
    },
    "spde-residual": {
        **MC_KEYS,
        **F_KEYS,
        "seed": Key(int, 0, "seed"),
        "times": Key(_floats, "0.25,0.5,1.0", "comma-separated evaluation times"),
        "refine": Key(int, 0, "also run the coupled refinement ladder (0/1)"),
    },
    "translation": {
        "sigma": Key(float, 1.0, "sigma(x)"),
        "b": Key(float, 0.0, "b(x)"),
        "n_paths": Key(int, 20000, "paths"),
        "dt": Key(float, 0.05, "time step"),
        "t": Key(float, 0.5, "time"),
        "N": Key(int, 64, "Hermite order"),
        "u0_width": Key(float, 1.0, "width of the Gaussian initial state"),
        "lambda": Key(float, math.nan, "constant potential for the wrapper (nan: none)"),
        "seed": Key(int, 0, "seed"),
    },
    "s5-identity": {**MC_KEYS, **F_KEYS, "seed": Key(int, 0, "seed")},
    "accept": {
        "profile": Key(str, "quick", "quick | full"),
        "seed": Key(int, 20240601, "base seed"),
        "only": Key(_ints, "", "comma-separated criterion numbers (default: all)"),
    },
}


def parse_params(sub: str, items) -> dict:
    schema = SCHEMAS[sub]
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        if k not in schema:
            raise UsageError(f"unknown key {k!r} for {sub}; allowed: {', '.join(sorted(schema))}")
        try:
            out[k] = schema[k].type(v)
        except ValueError as exc:
            raise UsageError(f"bad value for {k}: {v!r} ({exc})") from None
    for k, key in schema.items():
        if k not in out:
            out[k] = key.type(key.default) if isinstance(key.default, str) and key.type is not str else key.default
    return out


def _jsonable(obj):
    return acc._jsonable(obj)


def _schema_help(sub):
    lines = ["parameters (key=value):"]
    for k, key in SCHEMAS[sub].items():
        lines.append(f"  {k:<14} default={key.default!s:<22} {key.help}")
    return "\n".join(lines)


# --- builders -----------------------------------------------------------------


def _build_path(p) -> GridPath:
    if p["path"] == "csv":
        if not p["path_file"]:
            raise UsageError("path=csv needs path_file")
        return GridPath.from_csv(p["path_file"])
    if p["path"] == "constant":
        return GridPath.constant([p["value"]] * p["m"], p["T"], p["dt"])
    if p["path"] == "random":
        rng = np.random.default_rng(p["seed"])
        n = round(p["T"] / p["dt"])
        inc = rng.normal(0.0, math.sqrt(p["dt"]), (n, p["m"]))
        return GridPath(np.vstack([np.zeros((1, p["m"])), inc]).cumsum(axis=0), p["dt"])
    raise UsageError(f"unknown path kind {p['path']!r}")


def _build_potential(p, m):
    fields = parse_potential(p["potential"])
    V = None
    if fields.get("kind") == "linear":
        vals = _floats(p["coeffs"])
        if len(vals) != m:
            raise UsageError(f"kind=linear needs {m} coefficients in coeffs")
        V = HermiteState(np.array(vals), m - 1)
    try:
        return potential_from_params(fields, V)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _build_driver(p):
    kind = p["driver"]
    if kind == "brownian":
        return spec_from_dict({"kind": "brownian", "x0": [p["x0"]], "scale": p["sigma"]})
    if kind == "ou":
        return spec_from_dict({"kind": "ou", "x0": p["x0"], "theta": p["theta"], "sigma": p["sigma"]})
    raise UsageError(f"unknown driver {kind!r}")


def _build_vbar(p):
    a = p["vbar_a"]
    table = {
        "zero": lambda x: np.zeros_like(x),
        "const": lambda x: np.full_like(x, a),
        "quadratic": lambda x: a * x * x,
        "linear": lambda x: a * x,
        "cosine": lambda x: a * np.cos(x),
    }
    if p["vbar"] not in table:
        raise UsageError(f"unknown vbar {p['vbar']!r}")
    return table[p["vbar"]]


def _build_f(p):
    if p["f"] not in TEST_FUNCTIONS:
        raise UsageError(f"unknown test function {p['f']!r}")
    g, c, w = TEST_FUNCTIONS[p["f"]], p["f_center"], p["f_width"]
    return lambda x: g(np.asarray(x, dtype=float), c, w)


# --- subcommands ----------------------------------------------------------------
# each returns (scalars, series, flags); series maps a name to (header, rows)


def _path_series(y: GridPath, label):
    header = ["t"] + [f"{label}{j + 1}" for j in range(y.m)]
    return header, np.column_stack([y.times, y.values]).tolist()


def run_transform(p):
    y = _build_path(p)
    c = _build_potential(p, y.m)
    yh, diag = solve_hat(y, c, p["tol"], strategy=p["strategy"])
    back = forward_map(yh, c)
    err = float(np.max(np.linalg.norm(back.values - y.values, axis=1)))
    scalars = {"diagnostics": diag.to_dict(), "inverse_error": err, "potential": c.label}
    return scalars, {"y_hat": _path_series(yh, "yhat")}, {"inverse_consistent": err <= 1e-9}


def run_roundtrip(p):
    y = _build_path(p)
    c = _build_potential(p, y.m)
    fwd, rev = roundtrip_errors(y, c, p["tol"], strategy=p["strategy"])
    return {"forward_error": fwd, "reverse_error": rev, "potential": c.label}, {}, {
        "roundtrip": max(fwd, rev) <= p["threshold"]
    }


def run_stability(p):
    rng = np.random.default_rng(p["seed"])
    rows = []
    violations = 0
    for i in range(p["pairs"]):
        q = dict(p, seed=int(rng.integers(2**32)))
        y1 = _build_path(q)
        c = _build_potential(p, y1.m)
        bump = p["perturbation"] * rng.normal(size=(1, y1.m)) * np.sin(np.pi * y1.times)[:, None]
        y2 = y1.with_values(y1.values + bump)
        h1, _ = solve_hat(y1, c, p["tol"], strategy=p["strategy"])
        h2, _ = solve_hat(y2, c, p["tol"], strategy=p["strategy"])
        lhs, rhs = stability_bound(y1, y2, h1, h2, c)
        violations += not lhs <= rhs
        rows.append([i, lhs, rhs])
    return {"pairs": p["pairs"], "violations": violations}, {"pairs": (["pair", "lhs", "rhs"], rows)}, {
        "no_violations": violations == 0
    }


def run_simulate(p, out_dir, name):
    spec = _build_driver(p)
    if math.isfinite(p["radius"]):
        spec = spec.with_radius(p["radius"])
    cfg = McConfig(p["n_paths"], p["dt"], p["T"], p["seed"])
    batch = simulate_sde(spec, cfg)
    if p["binary"]:
        batch.save(out_dir / f"{name}.bin")
    end = batch.values[:, -1, 0]
    alive = batch.alive_at(cfg.steps)
    mean = batch.values[:, :, 0].mean(axis=0)
    var = batch.values[:, :, 0].var(axis=0)
    series = {"moments": (["t", "mean", "var"], np.column_stack([np.arange(cfg.steps + 1) * cfg.dt, mean, var]).tolist())}
    scalars = {"final_mean": float(end.mean()), "final_var": float(end.var()), "alive_fraction": float(alive.mean()),
               "bytes": len(batch.to_bytes()) if p["binary"] else 0}
    return scalars, series, {"finite": bool(np.all(np.isfinite(batch.values)))}


def _cfg(p):
    return McConfig(p["n_paths"], p["dt"], p["t"], p["seed"])


def run_fk_compare(p):
    spec = _build_driver(p)
    rep = fk.fk_duality_check(_build_f(p), None, _build_vbar(p), spec, _cfg(p), p["t"], p["N"],
                              pde={"nx": p["nx"], "dt": p["pde_dt"]}, taper=bool(p["taper"]))
    return rep.to_dict(), {}, {"duality": rep.passed}


def run_spde_residual(p):
    spec = _build_driver(p)
    f, vbar = _build_f(p), _build_vbar(p)
    cfg = McConfig(p["n_paths"], p["dt"], max(p["times"] + [p["t"]]), p["seed"])
    rep = fk.spde_weak_residual(f, spec, vbar, cfg, p["times"], p["N"])
    d = rep.to_dict()
    rows = [[t, m, s, cm, cs] for t, m, s, cm, cs in
            zip(rep.times, rep.mean, rep.std_error, rep.corrected_mean, rep.corrected_std_error)]
    series = {"residual": (["t", "mean", "se", "corrected_mean", "corrected_se"], rows)}
    flags = {"contract": all(rep.passed)}
    if p["refine"]:
        ladder = fk.residual_refinement(f, spec, vbar, McConfig(p["n_paths"], 1 / 16, cfg.T, p["seed"]), cfg.T)
        d["refinement"] = ladder.to_dict()
        flags["refinement_shrinks"] = ladder.shrinks
    return d, series, flags


def run_translation(p):
    w = p["u0_width"]
    u0 = project(lambda x: np.exp(-0.5 * (x / w) ** 2), p["N"])
    cfg = McConfig(p["n_paths"], p["dt"], p["t"], p["seed"])
    pot = None if math.isnan(p["lambda"]) else potential_from_params({"kind": "constant", "lambda": p["lambda"]})
    est, _ = fk.translation_semigroup_u(u0, 0.0, p["sigma"], p["b"], cfg, p["t"], potential=pot)
    # the Gaussian initial state stays Gaussian: variance w^2 + sigma^2 t, centre b t
    s2 = w * w + p["sigma"] ** 2 * p["t"]
    scale = math.exp(p["lambda"] * p["t"]) if pot else 1.0
    ref = project(lambda x: scale * w / math.sqrt(s2) * np.exp(-0.5 * (x - p["b"] * p["t"]) ** 2 / s2), p["N"])
    gap = np.abs(est.value.coeffs - ref.coeffs)
    tol = 1e-4 * scale + 3 * np.asarray(est.std_error)
    rows = [[k, est.value.coeffs[k], est.std_error[k], ref.coeffs[k]] for k in range(p["N"] + 1)]
    scalars = {"max_gap": float(gap.max()), "rejected_fraction": 1 - est.alive_fraction, "warnings": est.warnings}
    return scalars, {"coefficients": (["k", "mean", "se", "reference"], rows)}, {"matches_convolution": bool(np.all(gap <= tol))}


def run_s5_identity(p):
    spec = _build_driver(p)
    f = _build_f(p)
    rep = fk.section5_identity_comparator(None, _build_vbar(p), spec, _cfg(p), p["t"], p["N"], f=f,
                                          constant=p["vbar"] in ("zero", "const"))
    d = rep.to_dict()
    rows = [[k, a, b, g, s] for k, (a, b, g, s) in enumerate(zip(rep.lhs, rep.rhs, rep.coeff_gap, rep.coeff_se))]
    for key in ("lhs", "rhs", "coeff_gap", "coeff_se"):
        d.pop(key)
    flags = {} if rep.passed is None else {"identity": rep.passed}
    return d, {"coefficients": (["k", "lhs", "rhs", "gap", "se"], rows)}, flags


def run_accept(p, progress=None):
    if p["profile"] not in acc.PROFILES:
        raise UsageError(f"unknown profile {p['profile']!r}; allowed: {', '.join(acc.PROFILES)}")
    results = acc.accept(p["profile"], p["seed"], set(p["only"]) or None, progress=progress)
    scalars = {"criteria": [r.to_dict() for r in results]}
    timing = {f"criterion_{r.number}": r.seconds for r in results}
    flags = {f"criterion_{r.number}": r.passed for r in results}
    return scalars, {}, flags, timing


RUNNERS = {
    "transform": run_transform,
    "roundtrip": run_roundtrip,
    "stability": run_stability,
    "fk-compare": run_fk_compare,
    "spde-residual": run_spde_residual,
    "translation": run_translation,
    "s5-identity": run_s5_identity,
}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def run(sub: str, params: dict, out_dir: Path, name: str | None = None, echo=print) -> int:
    """Run one subcommand, write its report and return the exit code."""
    name = name or sub
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    timing = {}
    try:
        if sub == "simulate":
            scalars, series, flags = run_simulate(params, out_dir, name)
        elif sub == "accept":
            def progress(r):
                echo(f"[{'PASS' if r.passed else 'FAIL'}] {r.number:>2} {r.name}")

            scalars, series, flags, timing = run_accept(params, progress)
        else:
            scalars, series, flags = RUNNERS[sub](params)
        error = None
    except (PathkacError, ArithmeticError, ValueError) as exc:
        scalars, series, flags, error = {}, {}, {}, f"{type(exc).__name__}: {exc}"
    report = {
        "subcommand": sub,
        "config": params,
        "version": __version__,
        "results": scalars,
        "series": {k: f"{name}.{k}.csv" for k in series},
        "pass": flags,
        "all_pass": error is None and all(flags.values()),
    }
    if error:
        report["error"] = error
    for key, (header, rows) in series.items():
        _write_csv(out_dir / f"{name}.{key}.csv", header, rows)
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    (out_dir / f"{name}.json").write_text(text)
    timing["wall_clock_seconds"] = time.perf_counter() - t0
    (out_dir / f"{name}.timing.json").write_text(json.dumps(timing, sort_keys=True, indent=2) + "\n")
    if error:
        echo(f"error: {error}")
    echo(f"{sub}: {'pass' if report['all_pass'] else 'FAIL'} -> {out_dir / (name + '.json')}")
    return EXIT_OK if report["all_pass"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathkac", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for sub in SCHEMAS:
        sp = subs.add_parser(sub, epilog=_schema_help(sub), formatter_class=argparse.RawDescriptionHelpFormatter,
                             help=f"run {sub}")
        sp.add_argument("params", nargs="*", metavar="key=value")
        sp.add_argument("--output-dir", "-o", default="reports", help="report directory (default: reports)")
        sp.add_argument("--name", default=None, help="report base name (default: the subcommand)")
        sp.add_argument("--seed", type=int, default=None, help="shortcut for seed=...")
        if sub == "accept":
            sp.add_argument("--profile", default=None, help="shortcut for profile=...")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    items = list(args.params)
    if args.seed is not None:
        items.append(f"seed={args.seed}")
    if getattr(args, "profile", None) is not None:
        items.append(f"profile={args.profile}")
    try:
        params = parse_params(args.subcommand, items)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(args.subcommand, params, Path(args.output_dir), args.name)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
