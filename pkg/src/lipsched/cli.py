"""Command-line front end.

Every subcommand takes an optional JSON config file; flags override config
values.  All outputs of a run are computed in memory first and then written
through temporary files that are renamed into place, so a failing run never
leaves partial files behind.

Exit codes: 0 success, 2 invalid configuration, 3 numerical/domain failure.
Errors are reported as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
import warnings
from importlib import resources

import numpy as np

from .errors import AdmissibilityError, ConfigError, DomainError, TrivialTransportError
from .flow import error_bound, euler_flow, exact_flow, map_from_dict, second_derivative_constant
from .lipschitz import (lambda_of_schedule, lipschitz_curve, random_monotone_schedule,
                        report)
from .schedule import (TrivialTransportWarning, optimal_schedule, schedule_from_dict,
                       trivial_schedule)
from .spectral import (SpectralBounds, bounds_from_field, bounds_from_potential, constant_field,
                       field_from_map1d)
from .variational import l2_distance, solve_lp

FIGURES = ("fig1", "fig2", "fig3", "fig4", "gaussian_table")
DEFAULT_P = [1, 2, 4, 8, 16, 32, 64]


# ---------------------------------------------------------------- formatting

def _num(v) -> str:
    return format(float(v), ".17g")


class Outputs:
    """Named output files collected in memory before the atomic write."""

    def __init__(self, fmt: str = "csv"):
        self.fmt = fmt
        self.files: dict[str, str] = {}

    def json(self, name: str, obj):
        self.files[name] = json.dumps(obj, indent=2) + "\n"

    def table(self, stem: str, header, columns):
        cols = [np.asarray(c) for c in columns]
        if self.fmt == "json":
            rows = [[_cell(c[i]) for c in cols] for i in range(len(cols[0]))]
            self.json(stem + ".json", {"columns": list(header), "data": rows})
            return
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for i in range(len(cols[0])):
            buf.write(",".join(_csv_cell(c[i]) for c in cols) + "\n")
        self.files[stem + ".csv"] = buf.getvalue()

    def prefixed(self, prefix: str, other: "Outputs"):
        for k, v in other.files.items():
            self.files[f"{prefix}/{k}"] = v


def _cell(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _csv_cell(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _num(v)


def write_atomic(out_dir: str, files: dict[str, str]):
    """Write every file through a temporary sibling, then rename.

    If any write fails, the temporaries written so far are removed and no
    target file is touched.
    """
    staged = []
    try:
        for name, text in sorted(files.items()):
            path = os.path.join(out_dir, name)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=os.path.dirname(path))
            staged.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


# ------------------------------------------------------------- config access

def _get(cfg: dict, key: str, default=None, kind=None):
    v = cfg.get(key, default)
    if v is None or kind is None:
        return v
    try:
        if kind is int:
            if isinstance(v, bool) or float(v) != int(v):
                raise ValueError
            return int(v)
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} has invalid value {v!r}") from None


def _positive_int(cfg, key, default, minimum=1):
    v = _get(cfg, key, default, int)
    if v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {v}")
    return v


def _p_list(cfg):
    ps = cfg.get("p", DEFAULT_P)
    if isinstance(ps, (int, float)):
        ps = [ps]
    try:
        out = [int(p) for p in ps]
    except (TypeError, ValueError):
        raise ConfigError(f"p must be a positive integer or a list of them, got {ps!r}") from None
    if not out or any(p < 1 or p != q for p, q in zip(out, ps)):
        raise ConfigError(f"p must be a positive integer or a list of them, got {ps!r}")
    return out


def _map(cfg):
    spec = cfg.get("map")
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("'map' must be an object")
    try:
        tmap = map_from_dict(spec)
    except KeyError as exc:
        raise ConfigError(f"map spec is missing key {exc}") from None
    if not all(np.isfinite(tmap.domain)):
        raise ConfigError("map needs a bounded 'domain' [a, b]")
    return tmap


def _spectral(cfg):
    """Resolve ``(bounds, field, map)`` from a config.

    Precedence: explicit ``f_star``/``g_star``, then ``alpha``/``beta``, then
    the spectral field of ``map``.
    """
    tmap = _map(cfg)
    field = None
    if "f_star" in cfg or "g_star" in cfg:
        if "f_star" not in cfg or "g_star" not in cfg:
            raise ConfigError("f_star and g_star must be given together")
        bounds = SpectralBounds(_get(cfg, "f_star", kind=float), _get(cfg, "g_star", kind=float))
    elif "alpha" in cfg or "beta" in cfg:
        if "alpha" not in cfg or "beta" not in cfg:
            raise ConfigError("alpha and beta must be given together")
        bounds = bounds_from_potential(_get(cfg, "alpha", kind=float), _get(cfg, "beta", kind=float))
    elif tmap is not None:
        field = field_from_map1d(tmap, n=_positive_int(cfg, "n_field", 2001, 2))
        bounds = bounds_from_field(field)
    else:
        raise ConfigError("need spectral input: f_star/g_star, alpha/beta, or map")
    if field is None and tmap is not None and cfg.get("field_from_map", False):
        field = field_from_map1d(tmap, n=_positive_int(cfg, "n_field", 2001, 2))
    return bounds, field, tmap


# ------------------------------------------------------------------ commands

def _schedule_table(out, stem, sched, n):
    t, tau, dtau, ddtau = sched.sample(n)
    out.table(stem, ["t", "tau", "tau_dot", "tau_ddot"], [t, tau, dtau, ddtau])


def cmd_schedule(cfg: dict, fmt: str = "csv") -> Outputs:
    """Closed-form optimal schedule: JSON description plus sampled curve."""
    bounds, _, _ = _spectral(cfg)
    n = _positive_int(cfg, "grid", 1001, 2)
    sched = optimal_schedule(bounds)
    out = Outputs(fmt)
    d = sched.to_dict()
    if "f_star" not in d:
        d.update(bounds.to_dict())
    out.json("schedule.json", d)
    _schedule_table(out, "schedule_curve", sched, n)
    return out


def cmd_lp(cfg: dict, fmt: str = "csv") -> Outputs:
    """Relaxed schedules for each p and their L2 distance to the optimum."""
    bounds, field, _ = _spectral(dict(cfg, field_from_map=True))
    if field is None:
        n_field = _positive_int(cfg, "n_field", 2, 2)
        field = constant_field(bounds.f_star, bounds.g_star, n=n_field)
    n_tau = _positive_int(cfg, "grid", 2048, 16)
    n_sample = _positive_int(cfg, "n_sample", 1001, 2)
    ps = _p_list(cfg)
    target = optimal_schedule(bounds)
    out = Outputs(fmt)
    dist, zs, res = [], [], []
    for p in ps:
        sol = solve_lp(field, p, n_tau)
        out.json(f"lp_p{p}.json", sol.to_dict())
        _schedule_table(out, f"lp_p{p}_curve", sol.schedule, n_sample)
        dist.append(l2_distance(sol.schedule, target))
        zs.append(sol.z_p)
        res.append(sol.residual_sup)
    out.table("lp_convergence", ["p", "l2_distance", "z_p", "residual_sup"],
              [np.array(ps), dist, zs, res])
    return out


def cmd_lipschitz(cfg: dict, fmt: str = "csv", seed: int | None = None) -> Outputs:
    """Lipschitz report and per-time curves for trivial and optimal schedules.

    With ``n_perturb > 0`` the report also lists the objective at random
    monotone perturbations of the optimal schedule (seeded).
    """
    bounds, field, _ = _spectral(cfg)
    n = _positive_int(cfg, "grid", 1001, 2)
    src = field if field is not None else bounds
    opt = optimal_schedule(bounds)
    user = cfg.get("schedule")
    user_sched = schedule_from_dict(user) if isinstance(user, dict) else None
    rep = report(bounds, user_sched)
    out = Outputs(fmt)
    out.json("report.json", rep.to_dict())
    for name, sched in (("trivial", trivial_schedule()), ("optimal", opt)):
        t, lip = lipschitz_curve(src, sched, n)
        out.table(f"lipschitz_{name}", ["t", "lipschitz"], [t, lip])
    n_perturb = _positive_int(cfg, "n_perturb", 0, 0)
    if n_perturb:
        rng = np.random.default_rng(seed if seed is not None else _get(cfg, "seed", 0, int))
        vals = [lambda_of_schedule(bounds, random_monotone_schedule(rng, opt))
                for _ in range(n_perturb)]
        out.table("perturbations", ["index", "lambda", "lambda_optimal"],
                  [np.arange(n_perturb), vals, np.full(n_perturb, rep.lambda_optimal)])
    return out


def _starts(cfg, tmap):
    if "starts" in cfg:
        x0 = np.asarray(cfg["starts"], dtype=float)
        if x0.ndim != 1 or x0.size == 0:
            raise ConfigError("starts must be a non-empty list of numbers")
        return x0
    n = _positive_int(cfg, "n_starts", 21, 1)
    a, b = tmap.domain
    return np.linspace(a, b, n + 2)[1:-1]


def cmd_flow(cfg: dict, fmt: str = "csv") -> Outputs:
    """Exact trajectories under both schedules and an Euler error table."""
    tmap = _map(cfg)
    if tmap is None:
        raise ConfigError("flow needs a 'map'")
    bounds, _, _ = _spectral(cfg)
    n_times = _positive_int(cfg, "grid", 101, 2)
    steps = cfg.get("euler_steps", [32, 64, 128])
    if not isinstance(steps, list) or not all(isinstance(s, int) and s >= 1 for s in steps):
        raise ConfigError(f"euler_steps must be a list of positive integers, got {steps!r}")
    x0 = _starts(cfg, tmap)
    times = np.linspace(0.0, 1.0, n_times)
    opt = optimal_schedule(bounds)
    out = Outputs(fmt)
    for name, sched in (("trivial", trivial_schedule()), ("optimal", opt)):
        tr = exact_flow(tmap, sched, x0, times)
        k, j = np.meshgrid(np.arange(times.size), np.arange(x0.size), indexing="ij")
        out.table(f"trajectories_{name}", ["x0", "t", "x"],
                  [x0[j.T.ravel()], times[k.T.ravel()], tr.positions.T.ravel()])
    exact = tmap(x0)
    lam = lambda_of_schedule(bounds, opt)
    m = second_derivative_constant(tmap, opt)
    rows = {"n_steps": [], "h": [], "sup_error": [], "bound": []}
    for s in steps:
        err = float(np.max(np.abs(euler_flow(tmap, opt, x0, s).final - exact)))
        rows["n_steps"].append(s)
        rows["h"].append(1.0 / s)
        rows["sup_error"].append(err)
        rows["bound"].append(error_bound(bounds, tmap, opt, 1.0 / s))
    out.table("euler_errors", ["n_steps", "h", "sup_error", "bound", "M", "lambda"],
              [np.array(rows["n_steps"]), rows["h"], rows["sup_error"], rows["bound"],
               np.full(len(steps), m), np.full(len(steps), lam)])
    summary = {"schedule": opt.to_dict(), "M": m, "lambda": lam, "domain": list(tmap.domain)}
    summary.update(bounds.to_dict())
    out.json("flow_summary.json", summary)
    return out


def cmd_gaussian_table(cfg: dict, fmt: str = "csv") -> Outputs:
    """Trivial vs optimal Lipschitz bound for Gaussian scale ratios ``r``."""
    rs = cfg.get("r", [0.01, 0.1, 0.5, 2.0, 10.0, 100.0])
    try:
        rs = [float(r) for r in rs]
    except (TypeError, ValueError):
        raise ConfigError(f"r must be a list of positive numbers, got {rs!r}") from None
    if any(not r > 0 or r == 1.0 for r in rs):
        raise ConfigError("every r must be positive and different from 1")
    reps = [report((r - 1.0, r - 1.0)) for r in rs]
    out = Outputs(fmt)
    out.table("gaussian_table", ["r", "lambda_trivial", "lambda_optimal", "ratio"],
              [rs, [x.lambda_trivial for x in reps], [x.lambda_optimal for x in reps],
               [x.ratio for x in reps]])
    return out


COMMANDS = {
    "schedule": cmd_schedule,
    "lp": cmd_lp,
    "lipschitz": cmd_lipschitz,
    "flow": cmd_flow,
    "gaussian_table": cmd_gaussian_table,
}


def _run(command: str, cfg: dict, fmt: str, seed=None) -> Outputs:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if command == "lipschitz":
        return cmd_lipschitz(cfg, fmt, seed)
    return COMMANDS[command](cfg, fmt)


def load_figure_config(figure_id: str) -> dict:
    if figure_id not in FIGURES:
        raise ConfigError(f"unknown figure id {figure_id!r}; choose from {', '.join(FIGURES)}")
    text = resources.files("lipsched").joinpath("configs", f"{figure_id}.json").read_text()
    return json.loads(text)


def cmd_reproduce(figure_id: str, fmt: str = "csv", overrides: dict | None = None,
                  seed=None) -> Outputs:
    """Run the packaged recipe for one figure or table."""
    recipe = load_figure_config(figure_id)
    out = Outputs(fmt)
    for run in recipe["runs"]:
        cfg = dict(run.get("config", {}))
        cfg.update(overrides or {})
        out.prefixed(run["name"], _run(run["command"], cfg, fmt, seed))
    return out


# ----------------------------------------------------------------------- main

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of tabular outputs")
    common.add_argument("--grid", type=int, help="grid size (meaning depends on the command)")
    common.add_argument("--seed", type=int, help="seed for randomized checks")
    common.add_argument("--f-star", type=float, dest="f_star")
    common.add_argument("--g-star", type=float, dest="g_star")
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--p", type=int, nargs="+", help="one or more p values")
    common.add_argument("--n-starts", type=int, dest="n_starts")
    common.add_argument("--n-perturb", type=int, dest="n_perturb")

    parser = _Parser(prog="lipsched", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("schedule", parents=[common], help="optimal schedule from spectral bounds")
    sub.add_parser("lp", parents=[common], help="L^2p relaxed schedules and convergence table")
    sub.add_parser("lipschitz", parents=[common], help="Lipschitz report and curves")
    sub.add_parser("flow", parents=[common], help="trajectories and Euler error table")
    rep = sub.add_parser("reproduce", parents=[common], help="run a packaged figure recipe")
    rep.add_argument("figure", choices=FIGURES)
    return parser


_OVERRIDE_KEYS = ("grid", "f_star", "g_star", "alpha", "beta", "p", "n_starts", "n_perturb")


def _emit_error(kind: str, exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": msg}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if getattr(args, k) is not None}
        if args.command == "reproduce":
            if args.config is not None:
                raise ConfigError("reproduce uses packaged configs; --config is not accepted")
            with warnings.catch_warnings():
                warnings.simplefilter("error", TrivialTransportWarning)
                out = cmd_reproduce(args.figure, args.format, overrides, args.seed)
        else:
            cfg = _load_config(args.config)
            cfg.update(overrides)
            with warnings.catch_warnings():
                warnings.simplefilter("error", TrivialTransportWarning)
                out = _run(args.command, cfg, args.format, args.seed)
        write_atomic(args.out, out.files)
    except (ConfigError, AdmissibilityError, TrivialTransportError, TrivialTransportWarning) as exc:
        return _emit_error("config", exc, 2)
    except (DomainError, ArithmeticError, FloatingPointError) as exc:
        return _emit_error("numeric", exc, 3)
    except (KeyError, TypeError, ValueError) as exc:
        # malformed config values that slipped past the explicit checks
        return _emit_error("config", exc, 2)
    except OSError as exc:
        return _emit_error("io", exc, 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
