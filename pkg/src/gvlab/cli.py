"""Command-line front end.

Every run is driven by a flat ``key=value`` configuration (file via
``--config``, single overrides via ``--set``, plus the global flags).  The
fully resolved configuration is written into every output file together
with a schema line, so an output can always be regenerated.

Exit codes: 0 all assertions passed, 1 an assertion failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import checks
from .errors import GvlabError, NumericError
from .montecarlo import MCConfig
from .multiplier import phi_alt, phi_closed, phi_extension
from .norm_probe import SuiteConfig, reports_to_json, verify_bound_suite
from .torus_spectral import TorusField, TorusGrid
from .vertical_diffusion import BMDrift, Bessel, load_tabulated

SCHEMA = "gvlab-output/1"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# every key with its default; values are kept as text until a command parses them
DEFAULTS = {
    "spec": "bmdrift",
    "sigma": "1",
    "m": "0",
    "s": "0.5",
    "table": "",
    "lambdas": "0.1,1,10,100",
    "dim": "1",
    "n": "64",
    "modes": "s1:1",
    "potential": "none",
    "kinds": "WTS",
    "axis_i": "0",
    "axis_j": "0",
    "dt": "0.001",
    "n_paths": "20000",
    "y0": "6",
    "n_bins": "32",
    "max_steps": "1000000",
    "y_fine": "1",
    "z": "2",
    "min_fraction": "0.9",
    "max_rel_l2": "0.1",
    "ops": "",
    "p_list": "1.5,2,3,4,8",
    "trials": "24",
    "tol": "0.02",
    "include_potential": "true",
    "occupation_paths": "100000",
    "occupation_dt": "0.002",
    "fk_paths": "200000",
    "fk_t": "0.5",
    "fk_tol": "0.05",
    "mcd2_tol": "1e-6",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    out = {}
    for num, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {num}: expected key=value, got {raw!r}")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k] = v
    return out


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    cfg["seed"] = "0"
    cfg["threads"] = "1"
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    for item in args.set or []:
        cfg.update(parse_config_text(item))
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    if args.threads is not None:
        cfg["threads"] = str(args.threads)
    unknown = set(cfg) - set(DEFAULTS) - {"seed", "threads"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return cfg


def _num(cfg, key, kind=float):
    try:
        v = kind(cfg[key])
    except ValueError as exc:
        raise UsageError(f"{key}: cannot parse {cfg[key]!r}") from exc
    return v


def _floats(cfg, key) -> list:
    txt = cfg[key].strip()
    if not txt:
        return []
    try:
        return [float(t) for t in txt.split(",")]
    except ValueError as exc:
        raise UsageError(f"{key}: expected comma-separated numbers") from exc


def _bool(cfg, key) -> bool:
    v = cfg[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{key}: expected a boolean")


def build_spec(cfg):
    name = cfg["spec"].lower()
    if name == "bmdrift":
        return BMDrift(_num(cfg, "sigma"), _num(cfg, "m"))
    if name == "bessel":
        return Bessel(_num(cfg, "s"))
    if name == "tabulated":
        if not cfg["table"]:
            raise UsageError("spec=tabulated needs table=<path>")
        return load_tabulated(cfg["table"])
    raise UsageError(f"unknown spec {cfg['spec']!r}; use bmdrift, bessel or tabulated")


def build_field(cfg) -> TorusField:
    """``modes`` is a comma list of s<k>:<c> (c sin kx) or c<k>:<c> (c cos kx); on T^2 use s<k1>_<k2>."""
    dim, n = _num(cfg, "dim", int), _num(cfg, "n", int)
    grid = TorusGrid(dim, n)
    xs = grid.coords()
    vals = np.zeros(grid.shape)
    for item in filter(None, (t.strip() for t in cfg["modes"].split(","))):
        try:
            head, coef = item.split(":")
            fn = {"s": np.sin, "c": np.cos}[head[0]]
            ks = [int(t) for t in head[1:].split("_")]
            coef = float(coef)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad mode {item!r}; expected e.g. s1:1 or c2_1:0.5") from exc
        if len(ks) != dim:
            raise UsageError(f"mode {item!r} needs {dim} frequency component(s)")
        vals = vals + coef * fn(sum(k * x for k, x in zip(ks, xs)))
    return TorusField(grid, vals)


def build_potential(cfg, grid: TorusGrid) -> Optional[TorusField]:
    name = cfg["potential"].lower()
    if name == "none":
        return None
    if name == "cos":
        x = grid.coords()[0]
        return TorusField(grid, -(1.0 + np.cos(x)))
    raise UsageError("potential must be none or cos")


def build_mc(cfg, paths_key="n_paths", dt_key="dt") -> MCConfig:
    return MCConfig(dt=_num(cfg, dt_key), n_paths=_num(cfg, paths_key, int), y0=_num(cfg, "y0"),
                    seed=_num(cfg, "seed", int), n_bins=_num(cfg, "n_bins", int),
                    max_steps=_num(cfg, "max_steps", int), y_fine=_num(cfg, "y_fine"),
                    threads=_num(cfg, "threads", int))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

# execution-only settings: they cannot change any result, so they are not echoed
NOT_ECHOED = ("threads",)


def _echo(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg) if k not in NOT_ECHOED}


def _header(command: str, cfg: dict) -> str:
    lines = [f"# schema: {SCHEMA}", f"# command: {command}"]
    lines += [f"# config: {k}={v}" for k, v in _echo(cfg).items()]
    return "\n".join(lines) + "\n"


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _json(command: str, cfg: dict, payload) -> str:
    doc = {"schema": SCHEMA, "command": command, "config": _echo(cfg), "result": payload}
    return json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


def _g(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_phi_table(cfg: dict, out_dir: str) -> int:
    spec = build_spec(cfg)
    lams = _floats(cfg, "lambdas")
    rows = ["lambda,phi_extension,phi_alt,phi_closed,gap_extension_alt,gap_extension_closed"]
    closed_ok = isinstance(spec, (BMDrift, Bessel))
    for lam in lams:
        a, b = phi_extension(spec, lam), phi_alt(spec, lam)
        c = phi_closed(spec, lam) if closed_ok else math.nan
        rows.append(",".join(_g(v) for v in (lam, a, b, c, abs(a - b), abs(a - c))))
    _write(out_dir, "phi_table.csv", _header("phi-table", cfg) + "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_gv_verify(cfg: dict, out_dir: str) -> int:
    spec = build_spec(cfg)
    f = build_field(cfg)
    V = build_potential(cfg, f.grid)
    mc = build_mc(cfg)
    kinds = cfg["kinds"].upper()
    if not kinds or set(kinds) - set("WTS"):
        raise UsageError("kinds must be a subset of WTS")
    result, run, zs = checks.gv_check(f, spec, mc, V, _num(cfg, "axis_i", int), _num(cfg, "axis_j", int),
                                      kinds, _num(cfg, "z"), _num(cfg, "min_fraction"),
                                      _num(cfg, "max_rel_l2"))
    for k in kinds:
        est = getattr(run, k)
        lines = est.to_csv().splitlines()
        lines[0] += ",z_score"
        z = zs[k].ravel()
        lines[1:] = [ln + "," + _g(float(z[r])) for r, ln in enumerate(lines[1:])]
        _write(out_dir, f"gv_{k}.csv", _header("gv-verify", cfg) + "\n".join(lines) + "\n")
    _write(out_dir, "gv_summary.json", _json("gv-verify", cfg, result.to_dict()))
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_norm_probe(cfg: dict, out_dir: str) -> int:
    ops = tuple(t.strip() for t in cfg["ops"].split(";") if t.strip())
    suite = SuiteConfig(p_list=tuple(_floats(cfg, "p_list")), trials=_num(cfg, "trials", int),
                        seed=_num(cfg, "seed", int), tol=_num(cfg, "tol"),
                        include_potential=_bool(cfg, "include_potential"), select=ops,
                        threads=_num(cfg, "threads", int))
    reports = verify_bound_suite(suite)
    payload = json.loads(reports_to_json(reports, suite.tol))
    _write(out_dir, "norm_probe.json", _json("norm-probe", cfg, payload))
    return EXIT_OK if all(r.passed(suite.tol) for r in reports) else EXIT_FAIL


def cmd_checks(cfg: dict, out_dir: str) -> int:
    results = [checks.mcd2_check(tol=_num(cfg, "mcd2_tol")), checks.stinga_check()]
    occ_cfg = build_mc(cfg, "occupation_paths", "occupation_dt").with_(y0=1.0)
    results.append(checks.occupation_check(occ_cfg))
    fk_res, _ = checks.fk_check(build_mc(cfg, "fk_paths"), t=_num(cfg, "fk_t"), tol=_num(cfg, "fk_tol"))
    results.append(fk_res)
    payload = {"seed": int(cfg["seed"]), "all_passed": all(r.passed for r in results),
               "checks": [r.to_dict() for r in results]}
    _write(out_dir, "checks.json", _json("checks", cfg, payload))
    return EXIT_OK if payload["all_passed"] else EXIT_FAIL


COMMANDS = {"phi-table": cmd_phi_table, "gv-verify": cmd_gv_verify,
            "norm-probe": cmd_norm_probe, "checks": cmd_checks}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gvlab", description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, help="random seed (overrides the config)")
    ap.add_argument("--config", help="flat key=value configuration file")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    ap.add_argument("--out-dir", default=".", help="directory for output files")
    ap.add_argument("--threads", type=int, help="worker threads for Monte Carlo and probes")
    ap.add_argument("command", choices=sorted(COMMANDS))
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args.out_dir)
    except UsageError as exc:
        print(f"gvlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"gvlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except GvlabError as exc:
        # bad parameter values reach the library as domain errors
        print(f"gvlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
