"""Batch experiment runner.

Usage::

    cpxspec <command> --config <path> [--out <dir>] [--threads N] [--seed S]

Commands: ``spectrum``, ``inclusion``, ``saturate``, ``sogge``,
``torus-limit``, ``resolvent-map``.  The configuration is a JSON document
validated against :data:`CONFIG_SCHEMA` before anything is computed.  Every
run directory receives the resolved configuration (defaults filled in), the
CSV/JSON payloads, ``csv_schema.json`` and a ``MANIFEST`` of sha256 hashes.

Exit status: 0 success, 1 compute failure (``diagnostics.json`` written),
2 invalid configuration (nothing written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import jsonschema
import numpy as np

from .assembly import assemble_hamiltonian, spectrum as solve_spectrum, write_matrix_binary
from .basis import Truncation
from .experiments import (inclusion_experiment, resolvent_envelope, resolvent_map, sogge_norms,
                          sorted_spectrum)
from .inclusion import InclusionReport, ProblemParams
from .potentials import BandLimitedRandom, potential_from_dict
from .saturation import SaturationConfig, SaturationError, SaturationOutcome, run_saturation
from .torus_scaling import (LADDER_COLUMNS, calibrate_torus_constant, euclidean_limit_metrics,
                            ladder_csv, run_ladder)

__all__ = ["CONFIG_SCHEMA", "COMMANDS", "ConfigError", "resolve_config", "run", "main"]

COMMANDS = ("spectrum", "inclusion", "saturate", "sogge", "torus-limit", "resolvent-map")

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_Q = {"oneOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]}


def _obj(props: dict, required=("type",)) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": list(required)}


def _ptype(name: str, required=(), **props) -> dict:
    return _obj({"type": {"const": name}, **props}, ("type", *required))


_POT = {"$ref": "#/$defs/potential"}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "cpxspec experiment configuration",
    "$defs": {
        "potential": {"oneOf": [
            _ptype("constant", re=_NUM, im=_NUM),
            _ptype("zonal_power", ("a",), a={"type": "number", "minimum": 0}, re=_NUM, im=_NUM),
            _ptype("highest_weight_chi", ("k", "q"), k={"type": "integer", "minimum": 0}, q=_Q),
            _ptype("band_limited_random", ("degree", "seed", "amplitude"),
                   degree={"type": "integer", "minimum": 0}, seed=_INT, amplitude={"type": "number", "minimum": 0}, real={"type": "boolean"}),
            _ptype("scaled", ("inner", "L"), inner=_POT, L=_POS),
            _ptype("torus_bump", re=_NUM, im=_NUM, width=_POS,
                   center={"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}, box=_POS),
            _ptype("scale", ("inner",), inner=_POT, re=_NUM, im=_NUM),
            _ptype("square", ("chi",), chi=_POT, re=_NUM, im=_NUM),
            _ptype("pointwise", ("inner", "op"), inner=_POT, op={"enum": ["sqrt", "abs_sqrt"]}),
        ]},
        "truncation": {"oneOf": [
            _obj({"kind": {"const": "sphere"}, "l_max": {"type": "integer", "minimum": 0}},
                 ("kind", "l_max")),
            _obj({"kind": {"const": "torus"}, "radius": {"type": "number", "minimum": 0}, "side": _POS},
                 ("kind", "radius")),
            _obj({"kind": {"const": "torus_physical"}, "k_phys": _POS, "side": _POS},
                 ("kind", "k_phys", "side")),
        ]},
        "range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
    },
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "params": _obj({"n": {"const": 2}, "q": _Q}, ()),
        "potential": _POT,
        "truncation": {"$ref": "#/$defs/truncation"},
        "C": _POS,
        "backend": {"enum": ["lapack", "qr"]},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "write_matrix": {"type": "boolean"},
        "sweep": _obj({
            "k": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "rho": {"type": "array", "items": _POS, "minItems": 1},
            "theta": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            "L": {"type": "array", "items": _POS, "minItems": 1},
            "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "p_dual": {"type": "array", "items": {"type": "number", "minimum": 2}, "minItems": 1},
        }, ()),
        "inclusion": _obj({"extra": {"type": "integer", "minimum": 1}}, ()),
        "saturation": _obj({
            "chi_mode": {"enum": ["highest_weight", "power_iteration"]},
            "eps": _POS, "c_sat": _POS, "extra": {"type": "integer", "minimum": 1},
            "l_max": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
            "winding": {"type": "boolean"},
        }, ()),
        "torus": _obj({"k_phys": _POS, "box": _POS}, ()),
        "resolvent": _obj({
            "l_max": {"type": "integer", "minimum": 1},
            "p": {"type": "number", "exclusiveMinimum": 1, "maximum": 2},
            "re": {"$ref": "#/$defs/range"}, "im": {"$ref": "#/$defs/range"},
            "n_re": {"type": "integer", "minimum": 1}, "n_im": {"type": "integer", "minimum": 1},
            "iters": {"type": "integer", "minimum": 1},
        }, ()),
        "sogge": _obj({"iters": {"type": "integer", "minimum": 1}}, ()),
    },
}

DEFAULTS = {
    "params": {"n": 2, "q": 2.0},
    "backend": "lapack",
    "seed": 0,
    "threads": 1,
    "write_matrix": False,
    "inclusion": {"extra": 8},
    "saturation": {"chi_mode": "highest_weight", "eps": 0.3, "c_sat": 10.0, "extra": 8,
                   "l_max": None, "winding": True},
    "torus": {"k_phys": 20.0, "box": 0.45},
    "resolvent": {"l_max": 12, "p": 1.2, "re": [0.0, 40.0], "im": [-6.0, 6.0], "n_re": 21, "n_im": 7,
                  "iters": 20},
    "sogge": {"iters": 40},
}

REQUIRED = {
    "spectrum": ("potential", "truncation"),
    "inclusion": ("potential", "truncation"),
    "saturate": (),
    "sogge": (),
    "torus-limit": ("potential",),
    "resolvent-map": (),
}

SWEEP_DEFAULTS = {
    "saturate": {"k": [8], "rho": [0.5], "theta": [0.0]},
    "sogge": {"k": [2, 4, 8, 12, 16], "p_dual": [4.0, 6.0]},
    "torus-limit": {"L": [1.0, 2.0, 4.0, 8.0]},
    "inclusion": {"seeds": []},
}

# Sections that only make sense for one command are materialized only there.
SECTIONS = {
    "inclusion": ("inclusion",),
    "saturate": ("saturation",),
    "torus-limit": ("torus",),
    "resolvent-map": ("resolvent",),
    "sogge": ("sogge",),
    "spectrum": ("write_matrix",),
}
_OPTIONAL_SECTIONS = {"inclusion", "saturation", "torus", "resolvent", "sogge", "write_matrix"}


class ConfigError(ValueError):
    """Configuration does not satisfy the schema or its semantic checks."""


def _q_value(q):
    return math.inf if q == "inf" else float(q)


def _q_json(q: float):
    return "inf" if math.isinf(q) else q


def resolve_config(raw: dict, command: str, seed: int | None = None, threads: int | None = None) -> dict:
    """Validate ``raw`` and return a copy with all defaults filled in."""
    try:
        jsonschema.Draft202012Validator(CONFIG_SCHEMA).validate(raw)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"schema violation at '{path}': {exc.message}") from None
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if raw.get("command", command) != command:
        raise ConfigError(f"config is for command {raw['command']!r}, not {command!r}")
    for key in REQUIRED[command]:
        if key not in raw:
            raise ConfigError(f"command {command!r} needs '{key}'")
    cfg = {"command": command}
    for key, val in DEFAULTS.items():
        if key in _OPTIONAL_SECTIONS and key not in SECTIONS.get(command, ()):
            if key in raw:
                raise ConfigError(f"section '{key}' is not used by command {command!r}")
            continue
        if isinstance(val, dict):
            cfg[key] = {**val, **raw.get(key, {})}
        else:
            cfg[key] = raw.get(key, val)
    for key in ("potential", "truncation", "C"):
        if key in raw:
            cfg[key] = copy.deepcopy(raw[key])
    cfg["sweep"] = {**SWEEP_DEFAULTS.get(command, {}), **raw.get("sweep", {})}
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    try:
        q = _q_value(cfg["params"]["q"])
        ProblemParams(cfg["params"]["n"], q)
        if "potential" in cfg:
            cfg["potential"] = potential_from_dict(cfg["potential"]).to_dict()
        if "truncation" in cfg:
            _truncation(cfg["truncation"])
            cfg["truncation"] = _materialize_truncation(cfg["truncation"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if command == "saturate":
        sat = cfg["saturation"]
        try:
            for k in cfg["sweep"]["k"]:
                for rho in cfg["sweep"]["rho"]:
                    for th in cfg["sweep"]["theta"]:
                        _sat_config(cfg, k, rho, th)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if sat["l_max"] is not None and sat["l_max"] < 2 * max(cfg["sweep"]["k"]) + 8:
            raise ConfigError("saturation.l_max must be >= 2k + 8 for every k")
    if command == "inclusion" and cfg["sweep"]["seeds"] and cfg["potential"]["type"] != "band_limited_random":
        raise ConfigError("a seed batch needs a band_limited_random potential")
    return cfg


def _materialize_truncation(t: dict) -> dict:
    t = dict(t)
    if t["kind"] == "torus":
        t.setdefault("side", 1.0)
    return t


def _truncation(t: dict) -> Truncation:
    if t["kind"] == "sphere":
        return Truncation.sphere(t["l_max"])
    if t["kind"] == "torus":
        return Truncation.torus(t["radius"], t.get("side", 1.0))
    return Truncation.torus_physical(t["k_phys"], t["side"])


def _params(cfg) -> ProblemParams:
    return ProblemParams(cfg["params"]["n"], _q_value(cfg["params"]["q"]))


def _sat_config(cfg, k, rho, theta) -> SaturationConfig:
    s = cfg["saturation"]
    return SaturationConfig(int(k), _q_value(cfg["params"]["q"]), float(rho), float(theta),
                            s["l_max"], s["chi_mode"], cfg["params"]["n"], s["eps"], s["c_sat"], s["extra"])


# ---------------------------------------------------------------- output helpers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        f = float(x)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


class _Artifacts:
    """Collects payloads in memory; written once by the coordinator."""

    def __init__(self):
        self.files: dict[str, bytes] = {}
        self.csv_schema: dict[str, dict] = {}

    def add_csv(self, name: str, columns, rows, types: dict | None = None):
        self.files[name] = _csv_text(columns, rows).encode("utf-8")
        types = types or {}
        self.csv_schema[name] = {"columns": [{"name": c, "type": types.get(c, "number")} for c in columns]}

    def add_json(self, name: str, obj):
        self.files[name] = _json_text(obj).encode("utf-8")

    def add_bytes(self, name: str, data: bytes):
        self.files[name] = data


def _write_all(out: str, arts: _Artifacts, resolved: dict):
    os.makedirs(out, exist_ok=True)
    files = dict(arts.files)
    files["resolved_config.json"] = _json_text(resolved).encode("utf-8")
    files["csv_schema.json"] = _json_text(arts.csv_schema).encode("utf-8")
    for name, data in files.items():
        with open(os.path.join(out, name), "wb") as fh:
            fh.write(data)
    lines = [f"{hashlib.sha256(files[n]).hexdigest()}  {n}\n" for n in sorted(files)]
    with open(os.path.join(out, "MANIFEST"), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


# ---------------------------------------------------------------- commands

def _cmd_spectrum(cfg, arts: _Artifacts):
    spec = potential_from_dict(cfg["potential"])
    trunc = _truncation(cfg["truncation"])
    H = assemble_hamiltonian(spec, trunc)
    z = sorted_spectrum(solve_spectrum(H, cfg["backend"]))
    arts.add_csv("spectrum.csv", ("index", "z_re", "z_im"),
                 [(i, w.real, w.imag) for i, w in enumerate(z)], {"index": "integer"})
    arts.add_json("spectrum.json", {"n_basis": trunc.n_basis, "potential": cfg["potential"],
                                    "provenance": H.provenance})
    if cfg["write_matrix"]:
        buf = io.BytesIO()
        write_matrix_binary(buf, H.matrix)
        arts.add_bytes("hamiltonian.cpxmat", buf.getvalue())


_INCL_TYPES = {"seed": "integer or empty", "nearest_k": "integer", "disk_k": "integer", "cls": "string",
               "edge": "boolean"}


def _cmd_inclusion(cfg, arts: _Artifacts, pool):
    params = _params(cfg)
    trunc = _truncation(cfg["truncation"])
    C = cfg.get("C", 1.0)
    extra = cfg["inclusion"]["extra"]
    base = cfg["potential"]
    seeds = cfg["sweep"]["seeds"]
    if seeds:
        specs = [(s, BandLimitedRandom(base["degree"], s, base["amplitude"], base["real"])) for s in seeds]
    else:
        specs = [(base.get("seed", ""), potential_from_dict(base))]
    reports: list[InclusionReport] = list(pool.map(
        lambda sp: inclusion_experiment(sp[1], trunc, params, C, extra, cfg["backend"]), specs))
    rows = []
    for (s, _), rep in zip(specs, reports):
        for r in rep.records:
            rows.append([s] + [getattr(r, c) for c in InclusionReport.CSV_COLUMNS])
    arts.add_csv("inclusion.csv", ("seed",) + InclusionReport.CSV_COLUMNS, rows, _INCL_TYPES)
    reqs = [r.max_required_C for r in reports]
    summary = {
        "q": _q_json(params.q), "sigma": params.sigma, "C": C,
        "converged": all(r.converged for r in reports),
        "reports": [json.loads(r.to_json()) for r in reports],
        "calibrated_C": max(reqs),
        "batch": {"min": min(reqs), "median": float(np.median(reqs)), "max": max(reqs),
                  "seeds": [s for s, _ in specs]},
    }
    arts.add_json("inclusion.json", summary)


def _cmd_saturate(cfg, arts: _Artifacts, pool):
    sw = cfg["sweep"]
    keys = sorted((int(k), float(r), float(t)) for k in sw["k"] for r in sw["rho"] for t in sw["theta"])
    wind = cfg["saturation"]["winding"]

    def one(key):
        try:
            return run_saturation(_sat_config(cfg, *key), winding=wind, strict=True)
        except SaturationError as exc:
            return exc

    results = list(pool.map(one, keys))
    outs = [r.outcome if isinstance(r, SaturationError) else r for r in results]
    rows = [o.csv_row() for o in outs if o is not None]
    arts.add_csv("saturation.csv", SaturationOutcome.CSV_COLUMNS, rows,
                 {"k": "integer", "winding": "integer"})
    arts.add_json("saturation.json", {"runs": [o.to_dict() for o in outs if o is not None]})
    failed = [str(r) for r in results if isinstance(r, SaturationError)]
    if failed:
        raise RuntimeError("; ".join(failed))


def _fit_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _cmd_sogge(cfg, arts: _Artifacts, pool):
    rows = sogge_norms(cfg["sweep"]["k"], cfg["sweep"]["p_dual"], cfg["sogge"]["iters"], cfg["seed"])
    cols = ("k", "p_dual", "lower_bound", "nu", "ratio")
    arts.add_csv("sogge.csv", cols, [[r[c] for c in cols] for r in rows], {"k": "integer"})
    fits = {}
    for pd in cfg["sweep"]["p_dual"]:
        sel = [r for r in rows if r["p_dual"] == float(pd)]
        ratios = [r["ratio"] for r in sel]
        fits[repr(float(pd))] = {
            "nu": sel[0]["nu"],
            "slope": _fit_slope([1 + r["k"] for r in sel], [r["lower_bound"] for r in sel]) if len(sel) > 1 else None,
            "ratio_spread": max(ratios) / min(ratios),
        }
    arts.add_json("sogge.json", {"fits": fits})


def _cmd_torus_limit(cfg, arts: _Artifacts, pool):
    params = _params(cfg)
    V = potential_from_dict(cfg["potential"])
    if "C" in cfg:
        C, source = cfg["C"], "config"
    else:
        C, source = calibrate_torus_constant(params), "constant-potential calibration"
    tor = cfg["torus"]
    run = run_ladder(V, tuple(float(L) for L in cfg["sweep"]["L"]), tor["k_phys"], tor["box"], cfg["backend"])
    m = euclidean_limit_metrics(run, params, C)
    arts.files["ladder.csv"] = ladder_csv(m["rows"]).encode("utf-8")
    arts.csv_schema["ladder.csv"] = {"columns": [{"name": c, "type": "integer" if c == "N_basis" else "number"}
                                                 for c in LADDER_COLUMNS]}
    arts.add_json("torus_limit.json", {
        "C": C, "C_source": source, "q": _q_json(params.q), "sigma": params.sigma,
        "norm_v": m["norm_v"], "nonincreasing": m["nonincreasing"],
        "final_over_initial": m["final_over_initial"], "warning": m["warning"],
        "rows": [asdict(r) for r in m["rows"]],
    })


def _cmd_resolvent_map(cfg, arts: _Artifacts, pool):
    r = cfg["resolvent"]
    rows = resolvent_map(r["l_max"], r["p"], tuple(r["re"]), tuple(r["im"]), r["n_re"], r["n_im"],
                         r["iters"], cfg["seed"])
    cols = ("z_re", "z_im", "d", "nearest_k", "l2_norm", "inv_d", "mixed_lower", "in_xi", "skipped")
    arts.add_csv("resolvent_map.csv", cols, [[getattr(x, c) for c in cols] for x in rows],
                 {"nearest_k": "integer", "in_xi": "boolean", "skipped": "boolean"})
    p = r["p"]
    q = 1.0 / (2.0 / p - 1.0)
    env = resolvent_envelope(rows, ProblemParams(2, q))
    arts.add_json("resolvent_map.json", {"p": p, "q": q, "envelope": env["envelope"],
                                         "per_k": env["per_k"],
                                         "skipped": sum(1 for x in rows if x.skipped)})


_DISPATCH = {
    "spectrum": lambda cfg, arts, pool: _cmd_spectrum(cfg, arts),
    "inclusion": _cmd_inclusion,
    "saturate": _cmd_saturate,
    "sogge": _cmd_sogge,
    "torus-limit": _cmd_torus_limit,
    "resolvent-map": _cmd_resolvent_map,
}


def run(command: str, config_path: str, out: str | None = None, threads: int | None = None,
        seed: int | None = None) -> tuple[int, str | None]:
    """Run one command; returns ``(exit_status, output_dir)``."""
    try:
        with open(config_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        cfg = resolve_config(raw, command, seed, threads)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"cpxspec: invalid configuration: {exc}", file=sys.stderr)
        return 2, None
    if out is None:
        digest = hashlib.sha256(_json_text(cfg).encode("utf-8")).hexdigest()[:10]
        out = os.path.join("runs", f"{command}-{digest}")
    arts = _Artifacts()
    try:
        with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
            _DISPATCH[command](cfg, arts, pool)
    except Exception as exc:  # any compute failure becomes exit 1 with diagnostics
        arts.add_json("diagnostics.json", {"error": type(exc).__name__, "message": str(exc),
                                           "traceback": traceback.format_exc().splitlines()})
        _write_all(out, arts, cfg)
        print(f"cpxspec: {command} failed: {exc}", file=sys.stderr)
        return 1, out
    _write_all(out, arts, cfg)
    return 0, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cpxspec", description="Complex-potential spectral experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out", help="output directory (default runs/<command>-<config hash>)")
    ap.add_argument("--threads", type=int, help="worker threads for sweep points")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    args = ap.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("cpxspec: --threads must be >= 1", file=sys.stderr)
        return 2
    status, out = run(args.command, args.config, args.out, args.threads, args.seed)
    if out is not None:
        print(out)
    return status


if __name__ == "__main__":
    sys.exit(main())
