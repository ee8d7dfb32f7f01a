"""Command-line front end: config-driven, reproducible runs.

Every command reads an optional JSON config document, applies flag
overrides, validates the merged configuration fully before computing, and
echoes the effective config into its output document.  Results go to
--out or standard output; progress and logs go to standard error.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 internal
method disagreement.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import disorder as disorder_mod
from . import loops as loops_mod
from . import polarization as pol_mod
from . import spectral as spectral_mod
from . import symmetry as symmetry_mod
from . import topology as topology_mod
from .errors import (ConfigError, DegenerateEmbeddingError, GapClosedError,
                     MethodDisagreementError, NotConnectableError,
                     PiezotbError, ResolutionError, StepSizeError)
from .model import MODEL_PRESETS, model_from_document

_NUMERICAL_ERRORS = (GapClosedError, ResolutionError, DegenerateEmbeddingError,
                     NotConnectableError, StepSizeError)

_DEFAULTS = {
    "model": "uniaxial",
    "loop": {"type": "eta1", "eps": 0.5},
    "fermi_energy": 0.0,
    "n_k": 128,
    "n_t": 48,
    "n_grid": 64,
    "steps": None,
    "period": 200.0,
    "lattice_size": 12,
    "lambdas": [0.0, 0.1, 0.2],
    "seeds": [1, 2, 3, 4, 5],
    "region": [[0.0, 2.0], [0.0, 2.0], [0.0, 0.0]],
    "resolution": [101, 101, 1],
    "tolerance": 1e-3,
    "method": "quantized",
    "m": 1,
    "q": None,
    "threads": None,
    "seed": 0,
}


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _load_config(args) -> dict:
    config = dict(_DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(loaded) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    overrides = {
        "n_k": args.nk, "n_t": args.nt, "method": args.method,
        "threads": args.threads, "seed": args.seed, "period": args.period,
        "lattice_size": args.lattice_size, "m": args.m,
        "n_grid": args.n_grid, "steps": args.steps,
    }
    for key, val in overrides.items():
        if val is not None:
            config[key] = val
    if args.eps is not None:
        loop = dict(config["loop"]) if isinstance(config["loop"], dict) else {}
        loop["eps"] = args.eps
        config["loop"] = loop
    if getattr(args, "lambdas", None):
        config["lambdas"] = args.lambdas
    if getattr(args, "seeds", None):
        config["seeds"] = args.seeds
    return config


def _validate(config: dict, command: str) -> dict:
    """Full validation before any computation; raises ConfigError."""
    cfg = dict(config)
    model_doc = cfg["model"]
    if isinstance(model_doc, str) and model_doc not in MODEL_PRESETS:
        raise ConfigError(f"unknown model preset {model_doc!r}; "
                          f"available: {sorted(MODEL_PRESETS)}")
    try:
        model = model_from_document(model_doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg["_model"] = model
    if command in ("chern", "polarization", "disorder", "loop-info"):
        try:
            cfg["_loop"] = loops_mod.loop_from_document(cfg["loop"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid loop spec: {exc}") from exc
        if cfg["_loop"].n_params != model.n_params:
            raise ConfigError("loop dimension does not match the model")
    for key in ("n_k", "n_t", "n_grid", "lattice_size"):
        if int(cfg[key]) < 1:
            raise ConfigError(f"{key} must be positive")
    if cfg["steps"] is not None and int(cfg["steps"]) < 1:
        raise ConfigError("steps must be positive")
    if float(cfg["period"]) <= 0:
        raise ConfigError("period must be positive")
    if command == "gap-map":
        region, resolution = cfg["region"], cfg["resolution"]
        if (not isinstance(region, (list, tuple))
                or len(region) != model.n_params
                or any(len(ax) != 2 for ax in region)):
            raise ConfigError("region must list one [lo, hi] pair per parameter")
        if (not isinstance(resolution, (list, tuple))
                or len(resolution) != model.n_params
                or any(int(r) < 1 for r in resolution)):
            raise ConfigError("resolution must list one positive size per parameter")
        if any(float(lo) > float(hi) for lo, hi in region):
            raise ConfigError("region bounds must satisfy lo <= hi")
        box = model.admissible_box
        if box is not None:
            for (lo, hi), (blo, bhi) in zip(region, box):
                if float(lo) < blo - 1e-12 or float(hi) > bhi + 1e-12:
                    raise ConfigError(
                        f"region [{lo}, {hi}] outside admissible box [{blo}, {bhi}]")
    if command == "polarization" and cfg["method"] not in ("quantized", "riemann",
                                                           "dynamical"):
        raise ConfigError("method must be quantized, riemann, or dynamical")
    if command == "disorder":
        if not cfg["lambdas"]:
            raise ConfigError("need at least one coupling in lambdas")
        if any(float(l) < 0 for l in cfg["lambdas"]):
            raise ConfigError("couplings must be non-negative")
        if not cfg["seeds"]:
            raise ConfigError("need at least one seed")
    if command == "symmetry" and int(cfg["m"]) < 1:
        raise ConfigError("m must be a positive integer")
    return cfg


def _effective(config: dict) -> dict:
    return {k: v for k, v in config.items() if not k.startswith("_")}


def _emit(document: dict, out_path: str | None) -> None:
    text = json.dumps(document, indent=2, sort_keys=True, default=float) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
        _log(f"wrote {out_path}")
    else:
        sys.stdout.write(text)


def _strip_runtime(doc: dict, keep: bool) -> dict:
    if not keep:
        doc.pop("runtime_ms", None)
    return doc


# -- commands ---------------------------------------------------------------


def cmd_gap_map(cfg, args) -> int:
    model = cfg["_model"]
    _log(f"gap-map: {cfg['resolution']} cells, n_k={cfg['n_k']}")
    gm = spectral_mod.gap_map(model, cfg["region"], cfg["resolution"],
                              cfg["fermi_energy"], int(cfg["n_k"]),
                              float(cfg["tolerance"]),
                              threads=cfg["threads"])
    out = args.out or "gap_map.csv"
    with open(out, "w") as fh:
        gm.to_csv(fh)
    summary = {
        "config": _effective(cfg),
        "rows": int(len(gm.cells)),
        "gapless_cells": int((~gm.gapped).sum()),
        "out": out,
    }
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return 0


def cmd_chern(cfg, args) -> int:
    model = cfg["_model"]
    loop = cfg["_loop"]
    _log(f"chern: n_grid={cfg['n_grid']}")
    report = topology_mod.chern_report(model, loop, n_grid=int(cfg["n_grid"]),
                                       seed=int(cfg["seed"]),
                                       threads=cfg["threads"])
    quantized = pol_mod.ksv_quantized(model, loop, cfg["fermi_energy"],
                                      n_grid=int(cfg["n_grid"]))
    snapped = [int(v) for v in quantized.snapped()]
    if snapped != report["delta_p"]:
        raise MethodDisagreementError(
            f"winding delta_p {report['delta_p']} != per-slice value {snapped}")
    document = {"config": _effective(cfg), "loop": cfg["loop"]}
    document.update(report)
    document["delta_p_per_slice"] = snapped
    _emit(document, args.out)
    return 0


def cmd_polarization(cfg, args) -> int:
    model = cfg["_model"]
    loop = cfg["_loop"]
    method = cfg["method"]
    _log(f"polarization: method={method}")
    if method == "quantized":
        result = pol_mod.ksv_quantized(model, loop, cfg["fermi_energy"],
                                       n_grid=int(cfg["n_grid"]))
    elif method == "riemann":
        result = pol_mod.ksv_riemann(model, loop, cfg["fermi_energy"],
                                     n_k=int(cfg["n_k"]), n_t=int(cfg["n_t"]))
    else:
        result = pol_mod.dynamical_polarization(
            model, loop, cfg["fermi_energy"], period=float(cfg["period"]),
            n_k=int(cfg["n_k"]),
            steps=int(cfg["steps"]) if cfg["steps"] else None)
    document = {"config": _effective(cfg), "loop": cfg["loop"]}
    document.update(_strip_runtime(result.to_document(), args.timings))
    _emit(document, args.out)
    return 0


def cmd_disorder(cfg, args) -> int:
    model = cfg["_model"]
    loop = cfg["_loop"]
    lambdas = [float(v) for v in cfg["lambdas"]]
    seeds = [int(s) for s in cfg["seeds"]]
    size = int(cfg["lattice_size"])
    n_t = int(cfg["n_t"])
    out = args.out or "disorder_sweep.csv"
    rows = []
    warnings = 0
    for lam in lambdas:
        for seed in seeds:
            _log(f"disorder: lambda={lam} seed={seed}")
            try:
                result = disorder_mod.realspace_polarization(
                    model, loop, lam, seed, cfg["fermi_energy"],
                    lattice_size=size, n_t=n_t)
                rows.append((lam, seed, size, result.delta_p[0],
                             result.delta_p[1], result.residual,
                             result.metadata["min_gap"]))
            except _NUMERICAL_ERRORS as exc:
                warnings += 1
                _log(f"warning: lambda={lam} seed={seed} failed: {exc}")
                rows.append((lam, seed, size, float("nan"), float("nan"),
                             float("nan"), float("nan")))
    with open(out, "w") as fh:
        fh.write("lambda,seed,L,dP1,dP2,residual,min_gap\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    summary = {"config": _effective(cfg), "rows": len(rows),
               "failed_rows": warnings, "out": out}
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return 0


def cmd_symmetry(cfg, args) -> int:
    m = int(cfg["m"])
    verdict = symmetry_mod.symmetry_class(m)
    relations = symmetry_mod.verify_symmetry_relations(m)
    document = {"config": _effective(cfg)}
    document.update(verdict.to_document())
    document["relations_checked"] = relations["relations_checked"]
    document["max_residual"] = relations["max_residual"]
    document["relations_passed"] = relations["passed"]
    if cfg["q"] is not None:
        model = cfg["_model"]
        document["inversion"] = {
            "q": list(cfg["q"]),
            "symmetric": bool(symmetry_mod.check_inversion(
                model, cfg["q"], n_k=min(int(cfg["n_k"]), 64))),
        }
    _emit(document, args.out)
    return 0


def cmd_loop_info(cfg, args) -> int:
    model = cfg["_model"]
    loop = cfg["_loop"]
    report = spectral_mod.min_gap_along_loop(model, loop, cfg["fermi_energy"],
                                             n_k=min(int(cfg["n_k"]), 64))
    document = {
        "config": _effective(cfg),
        "loop": cfg["loop"],
        "closure_gap": loop.closure_gap(),
        "smoothness": loop.smoothness,
        "sample_count": loop.sample_count,
        "min_gap": report.min_distance,
        "gapped": bool(report.gapped),
        "argmin_t": report.argmin_t,
    }
    _emit(document, args.out)
    return 0


_COMMANDS = {
    "gap-map": cmd_gap_map,
    "chern": cmd_chern,
    "polarization": cmd_polarization,
    "disorder": cmd_disorder,
    "symmetry": cmd_symmetry,
    "loop-info": cmd_loop_info,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="piezotb",
        description="Quantized polarization of periodically deformed "
                    "two-band lattice models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--out", help="output path (default: standard output)")
        p.add_argument("--threads", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--nk", type=int)
        p.add_argument("--nt", type=int)
        p.add_argument("--n-grid", dest="n_grid", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--period", type=float)
        p.add_argument("--lattice-size", dest="lattice_size", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--method", choices=["quantized", "riemann", "dynamical"])
        p.add_argument("--lambda", dest="lambdas", type=float, action="append",
                       help="disorder coupling (repeatable)")
        p.add_argument("--disorder-seed", dest="seeds", type=int, action="append",
                       help="disorder seed (repeatable)")
        p.add_argument("--timings", action="store_true",
                       help="include runtime_ms in reports (breaks byte "
                            "determinism across runs)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _validate(_load_config(args), args.command)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 2
    except _NUMERICAL_ERRORS as exc:
        _log(f"numerical failure: {exc}")
        return 3
    except MethodDisagreementError as exc:
        _log(f"internal inconsistency: {exc}")
        return 4
    except PiezotbError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
