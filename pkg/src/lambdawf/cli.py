"""Command-line front end.

Every command writes one artifact (CSV or JSON) that carries the tool
version, the effective configuration and the seed, so that feeding the
artifact back through ``--config`` reproduces it. Thread count is a runtime
setting and is kept out of the artifact, which makes outputs byte-identical
across ``--threads``.

Exit codes: 0 success, 1 computational error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import secrets
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from .dual import DualConfig, dual_endpoints, recurrence_probe, simulate_dual
from .duality import FixationScan, duality_check, fixation_scan
from .errors import InvalidConfig, InvalidMeasure, KingmanUnsupported, LambdaWFError
from .forward import ForwardConfig, estimate_fixation, forward_endpoints, simulate_forward
from .measure import measure_from_dict, measure_to_dict, parse_measure
from .rates import (RateTable, alpha_star, cdi_classify, check_functionf, check_transience_g,
                    et_bound, mu_pardoux)

COMMANDS = ("alpha-star", "rates-table", "delta-table", "cdi", "et-bound", "simulate-forward",
            "simulate-dual", "duality-check", "fixation-scan", "lyapunov-check")
STOCHASTIC = {"simulate-forward", "simulate-dual", "duality-check", "fixation-scan"}
FORMATS = ("csv", "json")
TOOL = "lambdawf"


class ConfigError(InvalidConfig):
    """Unreadable or invalid configuration input."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    measure: dict | None = None
    alpha: float = 0.0
    x0: float | None = None
    n0: int | None = None
    t_max: float | None = None
    eps: float | None = None
    reps: int | None = None
    seed: int | None = None
    out_path: str | None = None
    format: str = "csv"
    K: int | None = None
    n_max: int | None = None
    alpha_grid: tuple | None = None
    probe: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["alpha_grid"] is not None:
            d["alpha_grid"] = list(d["alpha_grid"])
        return _encode(d)


_FIELDS = {f.name for f in fields(RunConfig)}
_INT_FIELDS = {"n0", "reps", "seed", "K", "n_max"}
_FLOAT_FIELDS = {"alpha", "x0", "t_max", "eps"}


# ---------------------------------------------------------------------------
# value encoding: inf and nan travel as strings


def _encode(v):
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_encode(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return v


def _as_float(name, v):
    if v is None:
        return None
    if isinstance(v, bool):
        raise ConfigError(f"{name}: expected a number, got {v!r}")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {v!r}") from None


def _as_int(name, v):
    if v is None:
        return None
    f = _as_float(name, v)
    if not math.isfinite(f) or f != int(f):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    return int(f)


# ---------------------------------------------------------------------------
# configuration


def _load_file(path: str) -> dict:
    """Read a JSON config, or the config block of a previous JSON/CSV artifact."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    if text.lstrip().startswith("#"):
        for line in text.splitlines():
            if line.startswith("# config: "):
                text = line[len("# config: "):]
                break
        else:
            raise ConfigError(f"{path}: CSV artifact has no '# config:' line")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "tool" in data and "config" in data:
        data = data["config"]
    return data


def build_config(command: str, values: dict) -> RunConfig:
    """Validate raw values (file merged with flags) into a RunConfig."""
    unknown = set(values) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if values.get("command", command) != command:
        raise ConfigError(f"config is for command {values['command']!r}, not {command!r}")
    v = dict(values)
    v["command"] = command
    m = v.get("measure")
    if isinstance(m, str):
        m = measure_to_dict(parse_measure(m))
    elif isinstance(m, dict):
        m = measure_to_dict(measure_from_dict(m))
    elif m is not None:
        raise ConfigError(f"measure: expected an object or shorthand string, got {m!r}")
    v["measure"] = m
    for k in _FLOAT_FIELDS:
        if k in v:
            v[k] = _as_float(k, v[k])
    for k in _INT_FIELDS:
        if k in v:
            v[k] = _as_int(k, v[k])
    if v.get("alpha") is None:
        v["alpha"] = 0.0
    if v.get("format") is None:
        v["format"] = "csv"
    if v["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {v['format']!r}")
    grid = v.get("alpha_grid")
    if isinstance(grid, str):
        grid = [g for g in grid.split(",") if g.strip()]
    if grid is not None:
        v["alpha_grid"] = tuple(_as_float("alpha_grid", g) for g in grid)
    v["probe"] = bool(v.get("probe", False))
    cfg = RunConfig(**v)
    _validate(cfg)
    return _with_defaults(cfg)


def _validate(cfg: RunConfig):
    def need(name):
        if getattr(cfg, name) is None:
            raise ConfigError(f"{cfg.command} needs --{name.replace('_', '-')}")

    if cfg.measure is None:
        raise ConfigError(f"{cfg.command} needs a measure (-m)")
    if not (cfg.alpha >= 0 and math.isfinite(cfg.alpha)):
        raise ConfigError(f"alpha must be finite and >= 0, got {cfg.alpha}")
    if cfg.x0 is not None and not 0.0 <= cfg.x0 <= 1.0:
        raise ConfigError(f"x0 must lie in [0, 1], got {cfg.x0}")
    if cfg.n0 is not None and cfg.n0 < 1:
        raise ConfigError(f"n0 must be >= 1, got {cfg.n0}")
    if cfg.t_max is not None and not cfg.t_max >= 0:
        raise ConfigError(f"t must be >= 0, got {cfg.t_max}")
    if cfg.eps is not None and not 0.0 < cfg.eps < 1.0:
        raise ConfigError(f"eps must lie in (0, 1), got {cfg.eps}")
    if cfg.reps is not None and cfg.reps < 1:
        raise ConfigError(f"reps must be >= 1, got {cfg.reps}")
    if cfg.seed is not None and not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError(f"seed must lie in [0, 2**64), got {cfg.seed}")
    if cfg.K is not None and cfg.K < 16:
        raise ConfigError(f"K must be >= 16, got {cfg.K}")
    if cfg.n_max is not None and cfg.n_max < 2:
        raise ConfigError(f"n-max must be >= 2, got {cfg.n_max}")
    if cfg.command in ("simulate-forward", "fixation-scan", "duality-check"):
        need("x0")
    if cfg.command in ("simulate-dual", "duality-check"):
        need("n0")
    if cfg.command == "duality-check":
        need("t_max")
    if cfg.command == "fixation-scan":
        need("alpha_grid")
        if not cfg.alpha_grid:
            raise ConfigError("alpha-grid must be nonempty")
        if list(cfg.alpha_grid) != sorted(cfg.alpha_grid):
            raise ConfigError("alpha-grid must be sorted")
    if cfg.t_max is not None and math.isinf(cfg.t_max) and cfg.command != "simulate-dual":
        raise ConfigError(f"{cfg.command} needs a finite --t")


_DEFAULTS = {
    "rates-table": {"n_max": 10},
    "delta-table": {"n_max": 64},
    "cdi": {"K": 1 << 14},
    "et-bound": {"K": 1 << 14},
    "lyapunov-check": {"n_max": 200},
    "simulate-forward": {"reps": 1},
    "simulate-dual": {"reps": 1},
    "duality-check": {"reps": 10000},
    "fixation-scan": {"reps": 10000},
}


def _with_defaults(cfg: RunConfig) -> RunConfig:
    d = {k: v for k, v in asdict(cfg).items()}
    for k, v in _DEFAULTS.get(cfg.command, {}).items():
        if d[k] is None:
            d[k] = v
    if cfg.command == "simulate-dual" and d["t_max"] is None:
        if cfg.alpha > 0:
            raise ConfigError("simulate-dual with alpha > 0 needs a finite --t")
        d["t_max"] = math.inf
    if cfg.command == "simulate-dual" and math.isinf(d["t_max"]) and cfg.alpha > 0:
        raise ConfigError("simulate-dual with alpha > 0 needs a finite --t")
    return RunConfig(**d)


def parse_config(command: str, flags: dict, config_path: str | None = None) -> RunConfig:
    """File values first, then flags that were given on the command line."""
    values = _load_file(config_path) if config_path else {}
    values = dict(values)
    for k, v in flags.items():
        if v is not None:
            values[k] = v
    return build_config(command, values)


# ---------------------------------------------------------------------------
# output


def _header(cfg: RunConfig) -> dict:
    return {"tool": TOOL, "version": __version__, "command": cfg.command,
            "seed": cfg.seed, "config": cfg.to_dict()}


def render(cfg: RunConfig, result: dict, table: tuple | None = None) -> str:
    """The artifact text for ``result`` (and an optional (columns, rows) table)."""
    head = _header(cfg)
    if cfg.format == "json":
        body = dict(result)
        if table is not None:
            cols, rows = table
            body["rows"] = [dict(zip(cols, r)) for r in rows]
        doc = dict(head, result=_encode(body))
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# {TOOL} {__version__}\n")
    buf.write(f"# command: {cfg.command}\n")
    buf.write(f"# seed: {'none' if cfg.seed is None else cfg.seed}\n")
    buf.write(f"# config: {json.dumps(head['config'], allow_nan=False)}\n")
    if table is not None:
        if result:
            buf.write(f"# result: {json.dumps(_encode(result), allow_nan=False)}\n")
        cols, rows = table
    else:
        cols, rows = list(result), [list(result.values())]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if v is None else _cell(v) for v in r])
    return buf.getvalue()


def _cell(v):
    v = _encode(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v)
    return v


def write_output(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"{path}: cannot write output ({exc.strerror})") from exc


# ---------------------------------------------------------------------------
# commands


def _measure(cfg):
    return measure_from_dict(cfg.measure)


def _cmd_alpha_star(cfg, threads):
    m = _measure(cfg)
    return {"alpha_star": alpha_star(m), "mu": mu_pardoux(m)}, None


def _cmd_rates_table(cfg, threads):
    m = _measure(cfg)
    rt = RateTable(m, cfg.alpha, n_max=cfg.n_max)
    ks = list(range(2, cfg.n_max + 1))
    rows = []
    for n in ks:
        row = [n] + [rt.lambda_nk(n, k) if k <= n else None for k in ks]
        rows.append(row)
    return {}, (["n"] + [f"k={k}" for k in ks], rows)


def _cmd_delta_table(cfg, threads):
    rt = RateTable(_measure(cfg), cfg.alpha, n_max=cfg.n_max)
    ns = np.arange(2, cfg.n_max + 1)
    rows = [[int(n), rt.phi_array[n], rt.psi_array[n], rt.delta_array[n], rt.delta_array[n] / n]
            for n in ns]
    return {"alpha_star": alpha_star(rt.measure)}, (["n", "phi", "psi", "delta", "delta_over_n"], rows)


def _cmd_cdi(cfg, threads):
    m = _measure(cfg)
    v = cdi_classify(m, cfg.K)
    return {"verdict": v.verdict, "K": v.K, "partial_sum": v.partial_sum,
            "tail_estimate": v.tail_estimate, "slope": v.slope,
            "et_bound": et_bound(m, cfg.K, v), "note": v.tail_note}, None


def _cmd_et_bound(cfg, threads):
    m = _measure(cfg)
    v = cdi_classify(m, cfg.K)
    return {"et_bound": et_bound(m, cfg.K, v), "verdict": v.verdict, "K": v.K}, None


def _forward_cfg(cfg, x0, alpha=None, record="endpoint"):
    return ForwardConfig(_measure(cfg), x0, cfg.alpha if alpha is None else alpha,
                         eps=cfg.eps, t_max=cfg.t_max, seed=cfg.seed, record=record)


def _cmd_simulate_forward(cfg, threads):
    if cfg.reps == 1:
        fc = _forward_cfg(cfg, cfg.x0, record="full")
        path = simulate_forward(fc, 0)
        return ({"outcome": path.outcome, "n_jumps": path.n_jumps, "final": path.final,
                 "eps": fc.eps, "t_max": fc.t_max,
                 "truncation_var_bound": path.truncation_var_bound},
                (["t", "x"], list(zip(path.times.tolist(), path.values.tolist()))))
    fc = _forward_cfg(cfg, cfg.x0)
    xs, _ = forward_endpoints(fc, cfg.reps, threads)
    est = estimate_fixation(fc, cfg.reps, threads)
    lo, hi = est.wilson("one")
    return {"reps": cfg.reps, "eps": fc.eps, "t_max": fc.t_max,
            "mean_x": float(xs.mean()), "se_x": float(xs.std(ddof=1) / math.sqrt(xs.size)),
            "p_one": est.p_one.value, "se_one": est.p_one.error,
            "p_zero": est.p_zero.value, "se_zero": est.p_zero.error,
            "undecided": est.undecided, "p_one_lo99": lo, "p_one_hi99": hi}, None


def _cmd_simulate_dual(cfg, threads):
    m = _measure(cfg)
    n_cap = max(10 ** 6, cfg.n0 + 1)
    dc = DualConfig(m, cfg.alpha, cfg.n0, cfg.t_max, n_cap, cfg.seed,
                    "full" if cfg.reps == 1 else "endpoint")
    if cfg.probe:
        if math.isinf(cfg.t_max):
            raise ConfigError("--probe needs a finite --t")
        s = recurrence_probe(dc, cfg.reps, threads)
        return s.as_dict(), None
    if cfg.reps == 1:
        path = simulate_dual(dc, 0)
        return ({"hit_one_time": path.hit_one_time, "capped": path.capped, "final": path.final},
                (["t", "n"], list(zip(path.times.tolist(), path.values.tolist()))))
    n, _, hit, capped = dual_endpoints(dc, cfg.reps, threads)
    hit_ok = hit[~np.isnan(hit)]
    return {"reps": cfg.reps, "mean_n": float(n.mean()),
            "se_n": float(n.std(ddof=1) / math.sqrt(n.size)),
            "hit_one_fraction": float(hit_ok.size / n.size),
            "mean_hit_one_time": float(hit_ok.mean()) if hit_ok.size else math.nan,
            "capped": int(capped.sum())}, None


def _cmd_duality_check(cfg, threads):
    rep = duality_check(_measure(cfg), cfg.alpha, cfg.x0, cfg.n0, cfg.t_max, cfg.reps,
                        seed=cfg.seed, threads=threads, eps=cfg.eps)
    return rep.as_dict(), None


def _cmd_fixation_scan(cfg, threads):
    t_max = cfg.t_max if cfg.t_max is not None else 200.0
    scan: FixationScan = fixation_scan(_measure(cfg), cfg.x0, cfg.alpha_grid, cfg.reps, t_max,
                                       seed=cfg.seed, threads=threads, eps=cfg.eps)
    rows = [[r[c] for c in FixationScan.COLUMNS] for r in scan.rows]
    return ({"alpha_star": scan.alpha_star, "critical_band": scan.band, "t_max": t_max,
             "monotonicity_violations": [list(v) for v in scan.violations]},
            (list(FixationScan.COLUMNS), rows))


def _cmd_lyapunov_check(cfg, threads):
    rt = RateTable(_measure(cfg), cfg.alpha, n_max=cfg.n_max + 1)
    rows = []
    worst = -math.inf
    for l in range(2, cfg.n_max + 1):
        lhs, rhs = check_functionf(rt, l)
        worst = max(worst, lhs - rhs)
        rows.append([l, lhs, rhs, bool(lhs <= rhs + 1e-6)])
    return ({"max_excess": worst, "holds": bool(worst <= 1e-6),
             "transience_g_at_n_max": check_transience_g(rt, cfg.n_max),
             "alpha_star": alpha_star(rt.measure)},
            (["l", "Lf", "bound", "holds"], rows))


_HANDLERS = {
    "alpha-star": _cmd_alpha_star, "rates-table": _cmd_rates_table,
    "delta-table": _cmd_delta_table, "cdi": _cmd_cdi, "et-bound": _cmd_et_bound,
    "simulate-forward": _cmd_simulate_forward, "simulate-dual": _cmd_simulate_dual,
    "duality-check": _cmd_duality_check, "fixation-scan": _cmd_fixation_scan,
    "lyapunov-check": _cmd_lyapunov_check,
}


def dispatch(cfg: RunConfig, threads: int = 1) -> str:
    result, table = _HANDLERS[cfg.command](cfg, threads)
    return render(cfg, result, table)


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-m", "--measure", help="dirac:x:c, beta:a:b, kingman:c or a JSON object")
    common.add_argument("--config", help="JSON config file or a previous output artifact")
    common.add_argument("--alpha", type=float)
    common.add_argument("--x0", "--x", dest="x0", type=float)
    common.add_argument("--n0", "--n", dest="n0", type=int)
    common.add_argument("--t", dest="t_max", type=float, help="time horizon")
    common.add_argument("--eps", type=float, help="small-jump truncation")
    common.add_argument("--reps", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", dest="out_path")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("-K", dest="K", type=int, help="CDI cutoff")
    common.add_argument("--n-max", dest="n_max", type=int)
    common.add_argument("--alpha-grid", dest="alpha_grid", help="comma-separated, sorted")
    common.add_argument("--probe", action="store_true", default=None,
                        help="simulate-dual: run the recurrence probe")
    p = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def _threads(flag):
    if flag is None:
        env = os.environ.get("LWF_DEFAULT_THREADS")
        try:
            flag = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"LWF_DEFAULT_THREADS must be an integer, got {env!r}") from None
    if flag < 1:
        raise ConfigError(f"threads must be >= 1, got {flag}")
    return flag


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    flags = vars(args).copy()
    command = flags.pop("command")
    config_path = flags.pop("config")
    thread_flag = flags.pop("threads")
    try:
        threads = _threads(thread_flag)
        cfg = parse_config(command, flags, config_path)
        if command in STOCHASTIC and cfg.seed is None:
            cfg = RunConfig(**dict(asdict(cfg), seed=secrets.randbits(63)))
            print(f"seed: {cfg.seed}", file=sys.stderr)
        text = dispatch(cfg, threads)
        write_output(text, cfg.out_path)
    except (InvalidConfig, InvalidMeasure, KingmanUnsupported) as exc:
        print(f"{TOOL}: config error: {exc}", file=sys.stderr)
        return 2
    except (LambdaWFError, ArithmeticError, ValueError, OSError) as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return 1
    return 0
