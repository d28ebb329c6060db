"""Batch front end: one JSON config in, one JSON result plus CSV traces out.

    ruelle run --config run.json [--set key=value ...] [--out DIR]
    ruelle validate --config run.json
    ruelle list-potentials
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ruelle import __version__
from ruelle.analysis import (
    bowen_estimate,
    equilibrium_pipeline,
    phase_gap_probe,
    xy_closed_form,
)
from ruelle.configuration import Configuration
from ruelle.kernels import (
    CylinderSet,
    kernel_value,
    quasilocality_trace,
    strong_non_null_probe,
    uniqueness_ratio_probe,
)
from ruelle.potentials import (
    make_constant,
    make_double_hofbauer,
    make_geometric,
    make_ising,
    make_long_range,
    make_single_site,
    make_table,
    random_table,
)
from ruelle.state_space import COUNTING, PROBABILITY, make_circle, make_finite_alphabet
from ruelle.transfer import pressure_trace, rpf_solve


class ConfigError(ValueError):
    pass


# name -> (constructor(space, **params), required params, optional params)
POTENTIALS = {
    "zero": (lambda s: make_constant(s, 0.0), (), ()),
    "constant": (lambda s, c: make_constant(s, c), ("c",), ()),
    "single_site": (lambda s, beta: make_single_site(s, beta), ("beta",), ()),
    "ising": (lambda s, beta: make_ising(s, beta), ("beta",), ()),
    "table": (lambda s, memory, values: make_table(s, memory, values), ("memory", "values"), ()),
    "random_table": (lambda s, memory, seed, scale=1.0: random_table(s, memory, seed, scale), ("memory", "seed"), ("scale",)),
    "geometric": (lambda s, beta, theta: make_geometric(s, beta, theta), ("beta", "theta"), ()),
    "long_range": (lambda s, gamma: make_long_range(s, gamma), ("gamma",), ()),
    "double_hofbauer": (
        lambda s, gamma, delta, strict=False: make_double_hofbauer(s, gamma, delta, strict),
        ("gamma", "delta"),
        ("strict",),
    ),
}

COMMON = {"command", "seed", "workers", "out_dir", "convention"}
# command -> (required keys, optional keys, needs space + potential)
COMMANDS = {
    "pressure": ({"n_max", "m"}, {"boundary"}, True),
    "rpf": (set(), {"memory", "tol", "max_iter", "pad"}, True),
    "kernel": ({"n", "cylinder"}, {"boundary", "cap", "samples"}, True),
    "probe": (
        {"probe"},
        {"i_max", "point", "boundaries", "n", "cylinder", "depths", "random_tails", "boundary", "n_list", "m", "cap", "samples"},
        True,
    ),
    "bowen": ({"n_max"}, {"random_tails", "n_list"}, True),
    "hofbauer": (set(), {"gamma", "delta", "n_max", "m", "i_max"}, False),
    "equilibrium": ({"memory_list"}, {"cylinders", "pad"}, True),
    "xy": ({"gamma", "m"}, {"allow_wide"}, False),
}
PROBES = ("strong_non_null", "quasilocality", "uniqueness", "phase_gap")


# ---------------------------------------------------------------------------
# config loading

def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def parse_document(text: str) -> dict:
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _int(doc, key, minimum=None):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key!r} must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key!r} must be >= {minimum}")
    return v


@dataclass
class RunConfig:
    raw: dict
    command: str
    space: Any = None
    potential: Any = None
    seed: int | None = None
    workers: int = 1
    convention: str = PROBABILITY
    out_dir: str = "results"
    params: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return hashlib.sha256(dumps(self.raw).encode()).hexdigest()[:12]


def _build_space(spec):
    if not isinstance(spec, dict):
        raise ConfigError("'state_space' must be an object")
    kind = spec.get("type")
    if kind == "finite":
        extra = set(spec) - {"type", "labels", "weights"}
        if extra:
            raise ConfigError(f"unknown state_space key(s) {sorted(extra)}")
        if "labels" not in spec:
            raise ConfigError("finite state_space needs 'labels'")
        return make_finite_alphabet(spec["labels"], spec.get("weights", "uniform"))
    if kind == "circle":
        extra = set(spec) - {"type", "node_count"}
        if extra:
            raise ConfigError(f"unknown state_space key(s) {sorted(extra)}")
        return make_circle(spec.get("node_count", 0))
    raise ConfigError(f"unknown state_space type {kind!r}")


def _build_potential(spec, space):
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("'potential' must be an object with a 'name'")
    extra = set(spec) - {"name", "params"}
    if extra:
        raise ConfigError(f"unknown potential key(s) {sorted(extra)}")
    name = spec["name"]
    if name not in POTENTIALS:
        raise ConfigError(f"unknown potential {name!r}; known: {', '.join(sorted(POTENTIALS))}")
    ctor, required, optional = POTENTIALS[name]
    params = spec.get("params", {})
    missing = [k for k in required if k not in params]
    unknown = sorted(set(params) - set(required) - set(optional))
    if missing:
        raise ConfigError(f"potential {name!r} is missing parameter(s) {missing}")
    if unknown:
        raise ConfigError(f"potential {name!r} has unknown parameter(s) {unknown}")
    return ctor(space, **params)


def _boundary(space, spec, key="boundary"):
    if not isinstance(spec, dict) or set(spec) - {"prefix", "pad"}:
        raise ConfigError(f"{key!r} entries must be objects with 'prefix' and 'pad'")
    try:
        return Configuration(space, tuple(spec.get("prefix", ())), int(spec.get("pad", 0)))
    except ValueError as exc:
        raise ConfigError(f"{key!r}: {exc}") from None


def load_config(doc: dict | str) -> RunConfig:
    if isinstance(doc, str):
        doc = parse_document(doc)
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown or missing command {command!r}; known: {', '.join(COMMANDS)}")
    required, optional, needs_model = COMMANDS[command]
    allowed = COMMON | required | optional | ({"state_space", "potential"} if needs_model else set())
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) for command {command!r}: {unknown}")
    missing = sorted((required | ({"state_space", "potential"} if needs_model else set())) - set(doc))
    if missing:
        raise ConfigError(f"missing key(s) for command {command!r}: {missing}")
    cfg = RunConfig(raw=doc, command=command)
    if needs_model:
        try:
            cfg.space = _build_space(doc["state_space"])
            cfg.potential = _build_potential(doc["potential"], cfg.space)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    if "seed" in doc:
        cfg.seed = _int(doc, "seed", 0)
        if cfg.seed >= 2**64:
            raise ConfigError("'seed' must fit in 64 bits")
    if "workers" in doc:
        cfg.workers = _int(doc, "workers", 1)
    cfg.convention = doc.get("convention", PROBABILITY)
    if cfg.convention not in (PROBABILITY, COUNTING):
        raise ConfigError(f"unknown convention {cfg.convention!r}")
    cfg.out_dir = str(doc.get("out_dir", "results"))
    for key in ("n", "n_max", "m", "max_iter", "memory", "i_max", "r", "cap", "point", "pad"):
        if key in doc:
            _int(doc, key, 0)
    for key in ("samples", "random_tails"):
        if key in doc and _int(doc, key, 0) > 0 and cfg.seed is None:
            raise ConfigError(f"{key!r} enables sampling, so 'seed' is required")
    if command == "bowen" and doc.get("random_tails", 32) > 0 and cfg.seed is None:
        raise ConfigError("bowen uses seeded random tails by default, so 'seed' is required")
    if command == "probe" and doc["probe"] not in PROBES:
        raise ConfigError(f"unknown probe {doc['probe']!r}; known: {', '.join(PROBES)}")
    cfg.params = {k: v for k, v in doc.items() if k not in COMMON | {"state_space", "potential"}}
    return cfg


def apply_overrides(doc: dict, assignments: list[str]) -> dict:
    doc = dict(doc)
    for item in assignments:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        if isinstance(doc.get(key), (dict, list)):
            raise ConfigError(f"--set can only override scalar keys; {key!r} is structured")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        if isinstance(value, (dict, list)):
            raise ConfigError(f"--set value for {key!r} must be a scalar")
        doc[key] = value
    return doc


# ---------------------------------------------------------------------------
# serialization

def _fmt_float(x: float, missing: str = "null") -> str:
    if not math.isfinite(x):
        return missing
    text = format(x, ".17g")
    return text if any(c in text for c in ".en") else text + ".0"


def dumps(obj, indent: int = 0, _level: int = 0) -> str:
    """JSON with sorted keys, 17 significant digits and NaN/inf as null."""
    pad = "\n" + " " * (indent * (_level + 1)) if indent else ""
    end = "\n" + " " * (indent * _level) if indent else ""
    sep = ", " if not indent else ","
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not len(seq):
            return "[]"
        return "[" + ", ".join(dumps(v, 0) for v in seq) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt_float(float(v), "nan") if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


@dataclass
class RunResult:
    config: dict
    command: str
    payload: dict
    timing: float
    traces: dict = field(default_factory=dict)  # name -> (header, rows)

    def document(self) -> dict:
        return {"config": self.config, "version": __version__, "command": self.command, "payload": self.payload, "timing": {"wall_seconds": self.timing}}


def write_results(result: RunResult, out_dir: str | Path, digest: str) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, (header, rows) in result.traces.items():
            path = out / f"{result.command}-{digest}-{name}.csv"
            path.write_text(csv_text(header, rows), encoding="utf-8", newline="")
            written.append(path)
        if result.payload is not None:
            path = out / f"{result.command}-{digest}.json"
            path.write_text(dumps(result.document(), indent=2) + "\n", encoding="utf-8", newline="")
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write results to {exc.filename or out}: {exc.strerror}") from exc
    return written


# ---------------------------------------------------------------------------
# commands

PRESSURE_HEADER = ["n", "p_n", "cauchy_gap"]
PROBE_HEADER = ["i_or_depth", "value", "stderr_if_sampled"]


def _pressure_payload(tr):
    return {
        "final_estimate": tr.final_estimate,
        "cauchy_gap": tr.cauchy_gap,
        "truncation_bound": tr.truncation_bound,
        "abs_trend": tr.abs_trend,
        "abs_shape": tr.abs_shape,
        "memory": tr.memory,
        "convention": tr.convention,
        "base_point": {"prefix": list(tr.base_point.prefix), "pad": tr.base_point.pad},
        "entries": [list(e) for e in tr.entries],
    }


def _cylinder(spec) -> CylinderSet:
    try:
        return CylinderSet(tuple(tuple(c) for c in spec))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'cylinder' must be a list of [coordinate, point] pairs: {exc}") from None


def _cmd_pressure(cfg, traces):
    f, p = cfg.potential, cfg.params
    x = _boundary(f.space, p.get("boundary", {"prefix": [], "pad": 0}))
    tr = pressure_trace(f, p["n_max"], x, p["m"], convention=cfg.convention)
    traces["trace"] = (PRESSURE_HEADER, tr.csv_rows())
    return _pressure_payload(tr)


def _cmd_rpf(cfg, traces):
    p = cfg.params
    sol = rpf_solve(cfg.potential, tol=p.get("tol", 1e-12), max_iter=p.get("max_iter", 100_000), memory=p.get("memory"), pad=p.get("pad", 0), convention=cfg.convention)
    return {
        "lambda": sol.lam,
        "log_lambda": sol.log_lambda,
        "h": sol.h.linear(),
        "nu": sol.nu,
        "mu": sol.mu,
        "residual_right": sol.residual_right,
        "residual_left": sol.residual_left,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "memory": sol.memory,
        "warnings": list(sol.warnings),
    }


def _cmd_kernel(cfg, traces):
    f, p = cfg.potential, cfg.params
    x = _boundary(f.space, p.get("boundary", {"prefix": [], "pad": 0}))
    kv = kernel_value(f, p["n"], _cylinder(p["cylinder"]), x, cap=p.get("cap", 10**7), samples=p.get("samples"), seed=cfg.seed, convention=cfg.convention)
    return {"value": kv.value, "stderr": kv.stderr, "sampled": kv.sampled, "log_numerator": kv.log_numerator, "log_denominator": kv.log_denominator}


def _probe_payload(tr):
    return {"kind": tr.kind, "trend": tr.trend, "power_slope": tr.power_slope, "exp_rate": tr.exp_rate, "entries": [list(e) for e in tr.entries]}


def _cmd_probe(cfg, traces):
    f, p = cfg.potential, cfg.params
    kind = p["probe"]
    bounds = [_boundary(f.space, b, "boundaries") for b in p.get("boundaries", [])]
    need = {
        "strong_non_null": ("i_max", "point", "boundaries"),
        "quasilocality": ("n", "cylinder", "depths"),
        "uniqueness": ("n", "cylinder", "boundaries"),
        "phase_gap": ("n_list", "m", "boundaries"),
    }[kind]
    missing = [k for k in need if k not in p]
    if missing:
        raise ConfigError(f"probe {kind!r} needs key(s) {missing}")
    if kind == "strong_non_null":
        tr = strong_non_null_probe(f, p["i_max"], p["point"], bounds, cap=p.get("cap", 10**7), samples=p.get("samples"), seed=cfg.seed)
    elif kind == "quasilocality":
        x = _boundary(f.space, p.get("boundary", {"prefix": [], "pad": 0}))
        tr = quasilocality_trace(f, p["n"], _cylinder(p["cylinder"]), x, p["depths"], random_tails=p.get("random_tails", 0), seed=cfg.seed or 0)
    elif kind == "uniqueness":
        pairs = [(a, b) for i, a in enumerate(bounds) for b in bounds[i + 1 :]]
        est = uniqueness_ratio_probe(f, _cylinder(p["cylinder"]), p["n"], pairs)
        worst = None if est.worst_pair is None else [{"prefix": list(z.prefix), "pad": z.pad} for z in est.worst_pair]
        return {"kind": kind, "c_estimate": est.c_estimate, "worst_pair": worst, "undefined_pairs": len(est.undefined_pairs)}
    else:
        if len(bounds) != 2:
            raise ConfigError("phase_gap needs exactly two boundaries")
        tr = phase_gap_probe(f, bounds[0], bounds[1], p["n_list"], p["m"])
    traces[kind] = (PROBE_HEADER, tr.csv_rows())
    return _probe_payload(tr)


def _cmd_bowen(cfg, traces):
    p = cfg.params
    est = bowen_estimate(cfg.potential, p["n_max"], seed=cfg.seed or 0, random_tails=p.get("random_tails", 32), n_list=p.get("n_list"))
    traces["bowen"] = (["n", "D_n"], est.entries)
    return {"entries": [list(e) for e in est.entries], "verdict": est.verdict, "rule": est.rule, "sampled_n": est.sampled, "tail_count": est.tail_count}


def _cmd_hofbauer(cfg, traces):
    p = cfg.params
    space = make_finite_alphabet([0, 1])
    f = make_double_hofbauer(space, p.get("gamma", 3.0), p.get("delta", 3.0))
    n_max, m, i_max = p.get("n_max", 64), p.get("m", 12), p.get("i_max", 20)
    payload = {"pressure": {}}
    bases = {"alternating": Configuration(space, (0, 1) * ((n_max + m) // 2 + 1), 0), "ones": Configuration(space, (), 1)}
    for label, x in bases.items():
        tr = pressure_trace(f, n_max, x, m, convention=COUNTING)
        traces[f"pressure_{label}"] = (PRESSURE_HEADER, tr.csv_rows())
        payload["pressure"][label] = _pressure_payload(tr)
    sn = strong_non_null_probe(f, i_max, 0, [bases["ones"]])
    traces["strong_non_null"] = (PROBE_HEADER, sn.csv_rows())
    payload["strong_non_null"] = _probe_payload(sn)
    payload["strong_non_null"]["halved"] = sn.values[-1] < sn.values[0] / 2
    return payload


def _cmd_equilibrium(cfg, traces):
    f, p = cfg.potential, cfg.params
    cyls = [_cylinder(c) for c in p.get("cylinders", [])]
    steps = equilibrium_pipeline(f, p["memory_list"], cyls, pad=p.get("pad", 0), convention=cfg.convention, workers=cfg.workers)
    rows = []
    out = []
    for st in steps:
        rows.append((st.m, st.solution.log_lambda, st.entropy.value, st.integral, st.defect))
        out.append({
            "m": st.m,
            "log_lambda": st.solution.log_lambda,
            "entropy_estimate": st.entropy.value,
            "entropy_argmin": st.entropy.argmin_candidate,
            "integral": st.integral,
            "defect": st.defect,
            "cylinder_probabilities": st.cylinder_probabilities,
            "converged": st.solution.converged,
        })
    traces["equilibrium"] = (["m", "log_lambda", "entropy_estimate", "integral", "defect"], rows)
    return {"steps": out}


def _cmd_xy(cfg, traces):
    p = cfg.params
    rep = xy_closed_form(p["gamma"], p["m"], allow_wide=bool(p.get("allow_wide", False)))
    return {
        "zeta": rep.zeta,
        "alpha": rep.alpha,
        "lambda_candidates": rep.candidates,
        "residuals": {f"weights={w};lambda={l}": v for (w, l), v in rep.residuals.items()},
        "grid_residuals": rep.grid_residuals,
        "implemented_convention": rep.implemented_convention,
        "closes_under": rep.closes_under,
        "named_convention": rep.named_convention,
        "sign_symmetry_log_exact": rep.sign_log_exact,
        "sign_symmetry_product_error": rep.sign_product_error,
    }


HANDLERS = {
    "pressure": _cmd_pressure,
    "rpf": _cmd_rpf,
    "kernel": _cmd_kernel,
    "probe": _cmd_probe,
    "bowen": _cmd_bowen,
    "hofbauer": _cmd_hofbauer,
    "equilibrium": _cmd_equilibrium,
    "xy": _cmd_xy,
}


def run(cfg: RunConfig) -> RunResult:
    """Execute one configured command. Partial traces survive a failure on ``exc.partial``."""
    traces: dict = {}
    start = time.perf_counter()
    try:
        payload = HANDLERS[cfg.command](cfg, traces)
    except Exception as exc:
        exc.partial = RunResult(cfg.raw, cfg.command, None, time.perf_counter() - start, traces)
        raise
    return RunResult(cfg.raw, cfg.command, payload, time.perf_counter() - start, traces)


# ---------------------------------------------------------------------------
# entry point

def _read_config(path: str, sets: list[str]) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return load_config(apply_overrides(parse_document(text), sets))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ruelle", description="Transfer-operator computations from a JSON config.")
    sub = parser.add_subparsers(dest="action", required=True)
    p_run = sub.add_parser("run", help="execute a config and write results")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_run.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sub.add_parser("list-potentials", help="print the registered potentials")
    args = parser.parse_args(argv)

    if args.action == "list-potentials":
        for name, (_, req, opt) in sorted(POTENTIALS.items()):
            params = list(req) + [f"[{o}]" for o in opt]
            print(f"{name}: {', '.join(params) if params else '(no parameters)'}")
        return 0
    try:
        cfg = _read_config(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.action == "validate":
        print(f"ok: {cfg.command} ({cfg.digest})")
        return 0
    out_dir = args.out or cfg.out_dir
    try:
        result = run(cfg)
    except (ConfigError, ValueError, ArithmeticError) as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None and partial.traces:
            write_results(partial, out_dir, cfg.digest)
        print(f"{cfg.command} failed: {exc}", file=sys.stderr)
        return 1
    for path in write_results(result, out_dir, cfg.digest):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
