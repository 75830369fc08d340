"""Command line runner: configuration parsing, dispatch and report emission.

A configuration is an INI-style text with three sections::

    [experiment]
    id = hedge-rate        # required
    seed = 0               # default 0
    replicas = 10000       # default 10000 (acceptance ids keep their own counts)

    [params]
    n_list = 4, 8, 16, 32, 64

    [output]
    dir = out

Seeds are resolved as ``--seed`` flag, then the ``FRACPATH_SEED``
environment variable, then the config value, then 0.  Exit codes: 0 when
every verdict passes, 2 for configuration errors, 3 for numerical errors
raised by the library, 4 when a verdict fails.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance as acc

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "run", "main",
           "EXPERIMENTS", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_TOLERANCE"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOLERANCE = 0, 2, 3, 4
DEFAULT_SEED = 0
DEFAULT_REPLICAS = 10_000


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


# ---------------------------------------------------------------------------
# Parameter schemas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    kind: str  # float, int, float_list, int_list, enum
    check: object = None  # callable(value) -> error message or None
    choices: tuple = ()
    target: str | None = None  # keyword of the criterion function (default: same name)


def _unit_open(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


def _unit_half_open(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


def _positive(v):
    return None if v > 0 else "must be positive"


def _each(check):
    def f(vals):
        for v in vals:
            msg = check(v)
            if msg:
                return f"entry {v!r} {msg}"
        return None
    return f


def _min_len(k, check=None):
    def f(vals):
        if len(vals) < k:
            return f"needs at least {k} values (got {len(vals)})"
        return _each(check)(vals) if check else None
    return f


def _increasing_pos(vals):
    if any(v <= 0 for v in vals):
        return "entries must be positive"
    if any(b <= a for a, b in zip(vals[:-1], vals[1:])):
        return "entries must increase"
    return None


_SCHEMAS = {
    1: {"n_paths": Param("int", _positive), "max_jumps": Param("int", _positive),
        "n_eval": Param("int", _positive)},
    2: {"theta": Param("float", _unit_half_open, target="thetas"),
        "thetas": Param("float_list", _each(_unit_half_open)),
        "n_list": Param("int_list", _each(_positive)), "n_r": Param("int", _positive)},
    3: {"b": Param("float", _unit_open), "thetas": Param("float_list", _each(_unit_half_open)),
        "n_pair": Param("int_list", lambda v: None if len(v) == 2 and 0 < v[0] < v[1] else
                        "must be two increasing positive integers"),
        "cp_replicas": Param("int", _positive), "cp_n": Param("int_list", _increasing_pos)},
    4: {"n_list": Param("int_list", _min_len(5, _positive), target="call_n"),
        "h_n_list": Param("int_list", _min_len(5, _positive), target="h_n"),
        "mc_n": Param("int", _positive)},
    5: {"alpha": Param("float", _unit_open), "thetas": Param("float_list", _each(_unit_open)),
        "a_grid": Param("float_list", _each(lambda v: None if 0 <= v < 1 else "must lie in [0, 1)")),
        "n_affine": Param("int", _positive)},
    6: {"eps": Param("float", _unit_open), "eta": Param("float", _unit_open),
        "d_min": Param("float", _positive), "d_max": Param("float", _positive),
        "n_t": Param("int", lambda v: None if v >= 5 else "needs at least 5 points")},
    7: {},
    8: {},
    9: {"err_replicas": Param("int", _positive), "n_err": Param("int_list", _min_len(3, _positive))},
    10: {"thetas": Param("float_list", _each(_unit_open)), "a_list": Param("float_list",
                                                                        _each(lambda v: None if v >= 0 else "must be nonnegative"))},
    11: {"n_list": Param("int_list", _min_len(3, _positive)), "tail_replicas": Param("int", _positive)},
}

# subcommand -> criterion id
_SUBCOMMANDS = {"rl-check": 1, "net-check": 2, "scaling-limit": 3, "hedge-rate": 4,
                "bmo-estimate": 5, "osc-rate": 6, "tv-profile": 7, "levy-gradient": 8,
                "gkw": 9, "holder-k": 10}

EXPERIMENTS = dict(_SUBCOMMANDS)
EXPERIMENTS.update({f"acceptance-{c}": c for c in acc.CRITERIA})
EXPERIMENTS["acceptance"] = None

_ACCEPTANCE_SCHEMA = {"only": Param("int_list", _each(lambda v: None if v in acc.CRITERIA else
                                                      "is not a criterion id"))}


def _schema(exp_id):
    cid = EXPERIMENTS[exp_id]
    return _ACCEPTANCE_SCHEMA if cid is None else _SCHEMAS[cid]


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    replicas: int = DEFAULT_REPLICAS
    replicas_explicit: bool = False
    out_dir: str = "out"

    def echo(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "seed": self.seed,
                "replicas": self.replicas, "out_dir": self.out_dir}


def _convert(path, raw, p: Param):
    raw = raw.strip()
    try:
        if p.kind == "float":
            v = float(raw)
        elif p.kind == "int":
            v = int(raw)
        elif p.kind == "float_list":
            v = [float(x) for x in raw.replace(";", ",").split(",") if x.strip()]
        elif p.kind == "int_list":
            v = [int(x) for x in raw.replace(";", ",").split(",") if x.strip()]
        elif p.kind == "enum":
            if raw not in p.choices:
                raise ValueError
            v = raw
        else:  # pragma: no cover
            raise AssertionError(p.kind)
    except ValueError:
        expect = {"float": "a real number", "int": "an integer", "float_list": "a list of reals",
                  "int_list": "a list of integers", "enum": f"one of {p.choices}"}[p.kind]
        raise ConfigError(f"{path}: expected {expect}, got {raw!r}") from None
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    if p.check is not None:
        msg = p.check(v)
        if msg:
            raise ConfigError(f"{path}: {msg} (got {raw})")
    return v


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration text."""
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"[{e.section}].{e.option}: duplicate key") from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"[{e.section}]: duplicate section") from None
    except configparser.Error as e:
        raise ConfigError(f"parse error: {e}") from None
    for sec in cp.sections():
        if sec not in ("experiment", "params", "output"):
            raise ConfigError(f"[{sec}]: unknown section")
    if not cp.has_section("experiment"):
        raise ConfigError("[experiment]: missing section")
    exp = cp["experiment"]
    for key in exp:
        if key not in ("id", "seed", "replicas"):
            raise ConfigError(f"[experiment].{key}: unknown key")
    if "id" not in exp:
        raise ConfigError("[experiment].id: missing required key")
    exp_id = exp["id"].strip()
    if exp_id not in EXPERIMENTS:
        raise ConfigError(f"[experiment].id: unknown experiment {exp_id!r}")
    cfg = ExperimentConfig(exp_id)
    if "seed" in exp:
        cfg.seed = _convert("[experiment].seed", exp["seed"], Param("int", lambda v: None if v >= 0 else "must be nonnegative"))
    if "replicas" in exp:
        cfg.replicas = _convert("[experiment].replicas", exp["replicas"], Param("int", _positive))
        cfg.replicas_explicit = True
    schema = _schema(exp_id)
    if cp.has_section("params"):
        for key, raw in cp["params"].items():
            if key not in schema:
                raise ConfigError(f"[params].{key}: unknown key for {exp_id}")
            cfg.params[key] = _convert(f"[params].{key}", raw, schema[key])
    if cp.has_section("output"):
        for key, raw in cp["output"].items():
            if key != "dir":
                raise ConfigError(f"[output].{key}: unknown key")
            cfg.out_dir = raw.strip()
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg):
    p = cfg.params
    if cfg.experiment in ("osc-rate", "acceptance-6") and "d_min" in p and "d_max" in p:
        if not p["d_min"] < p["d_max"] <= 1:
            raise ConfigError("[params].d_min: need d_min < d_max <= T")
    if cfg.experiment in ("hedge-rate", "acceptance-4") and "mc_n" in p:
        for key, default in (("n_list", (4, 8, 16, 32, 64, 128, 256)), ("h_n_list", (4, 8, 16, 32, 64, 128))):
            if p["mc_n"] not in p.get(key, default):
                raise ConfigError(f"[params].mc_n: must be an entry of [params].{key}")


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _kwargs(cfg, cid):
    schema = _SCHEMAS[cid]
    kw = {"seed": cfg.seed}
    for key, val in cfg.params.items():
        tgt = schema[key].target or key
        if key == "theta":
            val = (val,)
        elif isinstance(val, list):
            val = tuple(val)
        kw[tgt] = val
    if cfg.replicas_explicit or not cfg.experiment.startswith("acceptance"):
        kw["replicas"] = cfg.replicas
    return kw


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def _write_text(path: Path, text: str):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def run(cfg: ExperimentConfig, out_dir=None, quiet: bool = False):
    """Run an experiment, write ``report.json`` and CSV tables; return (report, exit code)."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    t0 = time.perf_counter()
    cid = EXPERIMENTS[cfg.experiment]
    ids = [cid] if cid is not None else cfg.params.get("only", sorted(acc.CRITERIA))
    results = []
    code = EXIT_OK
    error = None
    try:
        for c in ids:
            kw = _kwargs(cfg, c) if cid is not None else {"seed": cfg.seed, **(
                {"replicas": cfg.replicas} if cfg.replicas_explicit else {})}
            r = acc.run_criterion(c, **kw)
            results.append(r)
            if not quiet:
                print(r.summary(), flush=True)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        code = EXIT_NUMERIC
        error = f"{type(e).__name__}: {e}"
        if not quiet:
            print(f"numerical error: {error}", file=sys.stderr)
    verdicts = {}
    for r in results:
        verdicts.update(r.verdicts())
    if code == EXIT_OK and not all(verdicts.values()):
        code = EXIT_TOLERANCE
    report = {
        "experiment": cfg.experiment,
        "config": cfg.echo(),
        "version": __version__,
        "criteria": {f"C{r.cid}": {
            "title": r.title,
            "passed": r.passed,
            "runtime_s": r.runtime,
            "budget_s": r.budget,
            "results": [{"name": c.name, "estimate": c.value, "stderr": c.stderr, "op": c.op,
                         "tolerance": c.threshold, "passed": c.passed} for c in r.checks],
            "details": r.details} for r in results},
        "verdicts": verdicts,
        "passed": code == EXIT_OK,
        "exit_code": code,
        "error": error,
        "wall_clock_s": time.perf_counter() - t0,
    }
    out.mkdir(parents=True, exist_ok=True)
    multi = len(results) > 1 or cid is None
    for r in results:
        for name, text in r.tables.items():
            _write_text(out / (f"c{r.cid:02d}_{name}" if multi else name), text)
    _write_text(out / "report.json", json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return report, code


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _resolve_seed(flag, cfg_seed, cfg_has_seed):
    if flag is not None:
        return flag
    env = os.environ.get("FRACPATH_SEED")
    if env is not None and env.strip() != "":
        try:
            v = int(env)
        except ValueError:
            raise ConfigError(f"FRACPATH_SEED: expected an integer, got {env!r}") from None
        if v < 0:
            raise ConfigError("FRACPATH_SEED: must be nonnegative")
        return v
    return cfg_seed if cfg_has_seed else DEFAULT_SEED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracpath", description="Run fracpath experiments and the acceptance suite.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(_SUBCOMMANDS) + ["acceptance"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI-style config file")
        sp.add_argument("--seed", type=int, help="seed (overrides FRACPATH_SEED and the config)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--replicas", type=int, help="Monte Carlo replica count")
        if name == "acceptance":
            sp.add_argument("--only", help="comma separated criterion ids")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
            ok = cfg.experiment == args.command or (args.command == "acceptance" and
                                                    cfg.experiment.startswith("acceptance"))
            if not ok:
                raise ConfigError(f"[experiment].id: {cfg.experiment!r} does not match subcommand {args.command!r}")
            has_seed = True
        else:
            cfg = ExperimentConfig(args.command)
            has_seed = False
        if args.command == "acceptance" and getattr(args, "only", None):
            cfg.params["only"] = _convert("--only", args.only, _ACCEPTANCE_SCHEMA["only"])
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed: must be nonnegative")
        cfg.seed = _resolve_seed(args.seed, cfg.seed, has_seed)
        if args.replicas is not None:
            if args.replicas <= 0:
                raise ConfigError("--replicas: must be positive")
            cfg.replicas = args.replicas
            cfg.replicas_explicit = True
        if args.out:
            cfg.out_dir = args.out
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _, code = run(cfg)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
