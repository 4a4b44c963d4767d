"""Command-line front end.

Subcommands::

    korner gen --eps E --delta D --out p.json       # writes p.json and p.cert.json
    korner certify --in p.json --eps E --delta D
    basis build --l-max L
    spectrum build --l-max L
    represent run --target NAME|file.csv [--n-max N]
    represent verify --target NAME|file.csv
    export --plot --target NAME|file.csv

Exit status: 0 when every requested check passed, 1 when a check failed or a
module raised, 2 for usage and parse errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__
from .basis import BasisLayer, build_layers, check_increasing_spectra
from .config import OUT_ENV, RunConfig
from .driver import (
    Pipeline, RepresentationState, diagnostics_csv, maximal_decay, run, verify_fS,
)
from .errors import GenerationFailed, LayerBuildFailed, NonIntegerSpectrum, StepFailed
from .korner import KornerBook, KornerParams, certify, generate
from .spectrum import SpectrumPlan, build_plan, check_plan
from .trigpoly import SampleGrid, TrigPoly


class UsageError(Exception):
    pass


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"parse error in {path}: {exc}") from exc
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            cfg = RunConfig.from_dict(read_json(args.config))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config {args.config}: {exc}") from exc
    out = args.out_dir or os.environ.get(OUT_ENV) or cfg.out_dir
    over = {"out_dir": out}
    if getattr(args, "l_max", None) is not None:
        over["l_max"] = args.l_max
    if getattr(args, "n_max", None) is not None:
        over["N_max"] = args.n_max
    if getattr(args, "profile", None) is not None:
        over["profile"] = args.profile
    if getattr(args, "relaxation", None) is not None:
        over["basis"] = replace(cfg.basis, relaxation=args.relaxation)
    return cfg.with_overrides(**over)


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out_dir) / name


def _failure_manifest(cfg: RunConfig, command: str, exc: Exception, extra=None):
    atomic_write(_out(cfg, "failure.json"), dump({"command": command, "error": type(exc).__name__,
                                                  "message": str(exc), **(extra or {})}))


# ---- korner ----

def cmd_korner(args) -> int:
    cfg = load_config(args)
    if args.action == "gen":
        try:
            P = generate(KornerParams(args.eps, args.delta, seed=args.seed), cfg.korner)
        except GenerationFailed as exc:
            print(f"generation failed: {exc}", file=sys.stderr)
            return 1
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        cert = certify(P, args.eps, args.delta, cfg=cfg.korner)
        out = Path(args.out)
        atomic_write(out, P.to_json() + "\n")
        atomic_write(out.with_suffix(".cert.json"), dump(cert.to_dict()))
        print(dump(cert.to_dict()), end="")
        return 0 if cert.passed else 1
    try:
        P = TrigPoly.from_json_obj(read_json(args.inp))
    except ValueError as exc:
        raise UsageError(f"parse error in {args.inp}: {exc}") from exc
    try:
        cert = certify(P, args.eps, args.delta, cfg=cfg.korner)
    except NonIntegerSpectrum as exc:
        print(f"non-integer spectrum: {exc}", file=sys.stderr)
        return 1
    text = dump(cert.to_dict())
    if args.out:
        atomic_write(args.out, text)
    print(text, end="")
    return 0 if cert.passed else 1


# ---- pipeline ----

def _load_layers(cfg: RunConfig):
    p = _out(cfg, "basis.json")
    if not p.exists():
        return []
    d = read_json(p)
    return [BasisLayer.from_dict(x) for x in d["layers"]]


def _save_layers(cfg: RunConfig, layers, extra=None):
    atomic_write(_out(cfg, "basis.json"), dump({"config": cfg.to_dict(), "layers": [x.to_dict() for x in layers],
                                                **(extra or {})}))


def _build_layers(cfg: RunConfig, l_max: int):
    layers = _load_layers(cfg)[:l_max]
    try:
        layers = build_layers(l_max, cfg.rho_rule, cfg.basis, start=layers)
    except LayerBuildFailed as exc:
        _save_layers(cfg, exc.layers)
        _failure_manifest(cfg, "basis build", exc, {"l": exc.l, "r": exc.r,
                                                    "best_report": exc.report.to_dict()})
        raise
    _save_layers(cfg, layers)
    return layers


def cmd_basis(args) -> int:
    cfg = load_config(args)
    try:
        layers = _build_layers(cfg, cfg.l_max)
    except LayerBuildFailed as exc:
        print(f"basis build failed: {exc}", file=sys.stderr)
        return 1
    summary = [{"l": x.l, "eta_l": x.eta_l, "max_a_norm": x.max_a_norm} for x in layers]
    print(dump({"layers": summary, "increasing_spectra": check_increasing_spectra(layers)}), end="")
    return 0 if check_increasing_spectra(layers) else 1


def cmd_spectrum(args) -> int:
    cfg = load_config(args)
    try:
        layers = _build_layers(cfg, cfg.l_max)
        book = KornerBook(cfg.korner, seed=cfg.seed)
        plan = build_plan(layers, cfg.rho_rule, book)
    except (LayerBuildFailed, GenerationFailed) as exc:
        print(f"spectrum build failed: {exc}", file=sys.stderr)
        return 1
    checks = check_plan(plan)
    atomic_write(_out(cfg, "plan.json"), plan.to_json() + "\n")
    print(dump({"checks": checks, "layers": [r.to_dict() for r in plan.records]}), end="")
    return 0 if all(checks.values()) else 1


def _target_name(target: str) -> str:
    return Path(target).stem if target.endswith(".csv") else target


def _pipeline(cfg: RunConfig) -> Pipeline:
    layers = _load_layers(cfg)
    plan_path = _out(cfg, "plan.json")
    plan = None
    if plan_path.exists():
        plan = SpectrumPlan.from_dict(read_json(plan_path))
        if plan.l_max > len(layers):
            plan = None
    book = KornerBook(cfg.korner, seed=cfg.seed)
    if plan is not None:
        layers = layers[: max(plan.l_max, len(layers))]
    return Pipeline(cfg.rho_rule, cfg.basis, book, layers, plan)


def _state_path(cfg, target) -> Path:
    return _out(cfg, f"state_{_target_name(target)}.json")


def cmd_represent(args) -> int:
    cfg = load_config(args)
    if args.action == "run":
        pipe = _pipeline(cfg)
        try:
            state = run(args.target, cfg.N_max, pipe, cfg.driver)
            failed = None
        except StepFailed as exc:
            state, failed = exc.state, exc
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        atomic_write(_state_path(cfg, args.target), state.to_json() + "\n")
        if pipe.plan.l_max:
            atomic_write(_out(cfg, "plan.json"), pipe.plan.to_json() + "\n")
        if pipe.layers:
            _save_layers(cfg, pipe.layers)
        reports = [r.to_dict() for r in state.reports]
        print(dump({"reports": reports}), end="")
        if failed is not None:
            _failure_manifest(cfg, "represent run", failed, {"N": failed.N, "stage": failed.stage})
            print(f"represent run stopped: {failed}", file=sys.stderr)
            return 1
        return 0 if all(all(r.bound_checks.values()) for r in state.reports) else 1
    state = RepresentationState.from_dict(read_json(_state_path(cfg, args.target)))
    result = []
    ok = True
    for N in range(1, state.N + 1):
        rep, passed = verify_fS(state, args.target, N, cfg.driver)
        ok &= passed
        result.append({"N": N, "fS": rep.to_dict(), "passed": passed})
    decay = maximal_decay(state, range(1, state.N + 1), SampleGrid(-math.pi, math.pi, cfg.driver.hstar_count))
    ok &= all(d["first_below_1_over_N"] and d["split_bound_holds"] for d in decay)
    medians = [d["median"] for d in decay]
    monotone = all(b <= a for a, b in zip(medians, medians[1:]))
    text = dump({"verify_fS": result, "maximal_decay": decay, "median_nonincreasing": monotone})
    atomic_write(_out(cfg, f"verify_{_target_name(args.target)}.json"), text)
    print(text, end="")
    return 0 if ok and monotone else 1


def cmd_export(args) -> int:
    cfg = load_config(args)
    if not args.plot:
        raise UsageError("export needs --plot")
    state = RepresentationState.from_dict(read_json(_state_path(cfg, args.target)))
    for N in range(1, state.N + 1):
        atomic_write(_out(cfg, f"plot_{_target_name(args.target)}_N{N}.csv"),
                     diagnostics_csv(state, args.target, N, cfg.driver, count=args.count))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="almostint", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--out-dir", help=f"output directory (default: ${OUT_ENV} or config out_dir)")
    sub = p.add_subparsers(dest="group", required=True)

    k = sub.add_parser("korner", help="generate or certify Korner polynomials")
    ksub = k.add_subparsers(dest="action", required=True)
    kg = ksub.add_parser("gen")
    kg.add_argument("--eps", type=float, required=True)
    kg.add_argument("--delta", type=float, required=True)
    kg.add_argument("--seed", type=int, default=0)
    kg.add_argument("--out", required=True)
    kc = ksub.add_parser("certify")
    kc.add_argument("--in", dest="inp", required=True)
    kc.add_argument("--eps", type=float, required=True)
    kc.add_argument("--delta", type=float, required=True)
    kc.add_argument("--out")
    k.set_defaults(func=cmd_korner)

    b = sub.add_parser("basis", help="build basis layers")
    bsub = b.add_subparsers(dest="action", required=True)
    bb = bsub.add_parser("build")
    bb.add_argument("--l-max", type=int)
    bb.add_argument("--relaxation", type=float)
    b.set_defaults(func=cmd_basis)

    s = sub.add_parser("spectrum", help="build the spectrum plan")
    ssub = s.add_subparsers(dest="action", required=True)
    sb = ssub.add_parser("build")
    sb.add_argument("--l-max", type=int)
    sb.add_argument("--relaxation", type=float)
    s.set_defaults(func=cmd_spectrum)

    r = sub.add_parser("represent", help="run or verify the representation loop")
    rsub = r.add_subparsers(dest="action", required=True)
    for name in ("run", "verify"):
        rr = rsub.add_parser(name)
        rr.add_argument("--target", required=True, help="zero | clipped_step | gaussian | file.csv")
        rr.add_argument("--n-max", type=int)
        rr.add_argument("--profile", choices=("faithful", "desk"))
    r.set_defaults(func=cmd_represent)

    e = sub.add_parser("export", help="per-step CSV diagnostics")
    e.add_argument("--plot", action="store_true")
    e.add_argument("--target", required=True)
    e.add_argument("--count", type=int, help="grid points per window (default: verification density)")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
