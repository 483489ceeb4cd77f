"""Command-line front end.

Subcommands: ``ser-iter`` and ``ser-snr`` run Monte-Carlo sweeps, ``detect``
runs every requested detector on one seeded realization, ``diagnose`` audits
the convergence inequalities of a single run, and ``validate`` executes the
randomized invariant suites. Option precedence is flag > config file >
built-in default; the built-in defaults mirror the reference experiment
setup (K=16, N=64, 16-QAM, 9 dB) at a reduced trial count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .apsm import diagnose
from .cost import BetaSchedule, QuadraticResidualCost, RhoSchedule, standard_config
from .detectors import _APSM_VARIANT, DetectorKind, detect
from .errors import ConfigError
from .geometry import constellation
from .mimo import ChannelModel, make_instance, symbol_errors
from .sim import (
    ExperimentConfig,
    emit,
    resolve_apsm_config,
    run_ser_vs_iter,
    run_ser_vs_snr,
    table_text,
)
from .validation import run_all_suites

DEFAULTS = {
    "k": 16,
    "n": 64,
    "mod": "16qam",
    "channel": "iid",
    "rho_tx": 0.0,
    "rho_rx": 0.0,
    "snr": [9.0],
    "trials": 100,
    "iters": 300,
    "detectors": "apsm_plain,apsm_l2,apsm_l1,constrained_lmmse,box_oracle",
    "rho0": None,
    "growth": None,
    "mu": None,
    "beta": None,
    "beta_geom": None,
    "tau": None,
    "seed": 0,
    "workers": None,
    "out": None,
    "format": "csv",
    "dump_trace": None,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file (flags override file values)")
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--mod", choices=["qpsk", "16qam", "64qam"])
    p.add_argument("--channel", choices=["iid", "kronecker"])
    p.add_argument("--rho-tx", dest="rho_tx", type=float)
    p.add_argument("--rho-rx", dest="rho_rx", type=float)
    p.add_argument("--snr", action="append", type=float,
                   help="SNR in dB (repeatable)")
    p.add_argument("--trials", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--detectors", type=str, help="comma-separated detector list")
    p.add_argument("--rho0", type=float)
    p.add_argument("--growth", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--beta", type=float, help="constant perturbation scaling")
    p.add_argument("--beta-geom", dest="beta_geom", type=float,
                   help="geometric perturbation scaling base")
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--dump-trace", dest="dump_trace", type=str,
                   help="write the per-iteration trace CSV of one detector")


def _resolve(args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                file_vals = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}")
        unknown = set(file_vals) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_vals)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    if isinstance(merged["snr"], (int, float)):
        merged["snr"] = [float(merged["snr"])]
    return merged


def _parse_detectors(listing: str | list) -> tuple[DetectorKind, ...]:
    if isinstance(listing, str):
        names = [s.strip() for s in listing.split(",") if s.strip()]
    else:
        names = list(listing)
    try:
        return tuple(DetectorKind(name) for name in names)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _apsm_overrides(vals: dict, kinds: tuple[DetectorKind, ...]) -> dict:
    custom = any(vals[key] is not None
                 for key in ("rho0", "growth", "mu", "beta", "beta_geom", "tau"))
    if not custom:
        return {}
    if vals["beta"] is not None and vals["beta_geom"] is not None:
        raise ConfigError("--beta and --beta-geom are mutually exclusive")
    overrides = {}
    for kind in kinds:
        if kind not in _APSM_VARIANT:
            continue
        base = standard_config(_APSM_VARIANT[kind], max_iters=vals["iters"])
        rho = RhoSchedule(
            vals["rho0"] if vals["rho0"] is not None else base.rho.rho0,
            vals["growth"] if vals["growth"] is not None else base.rho.growth,
        )
        beta = base.beta
        if vals["beta"] is not None:
            beta = BetaSchedule.constant(vals["beta"])
        elif vals["beta_geom"] is not None:
            beta = BetaSchedule.geometric(vals["beta_geom"])
        overrides[kind] = replace(
            base,
            rho=rho,
            mu=vals["mu"] if vals["mu"] is not None else base.mu,
            tau=vals["tau"] if vals["tau"] is not None else base.tau,
            beta=beta,
        )
    return overrides


def _experiment_config(vals: dict) -> ExperimentConfig:
    kinds = _parse_detectors(vals["detectors"])
    channel = ChannelModel(vals["channel"], vals["rho_tx"], vals["rho_rx"])
    return ExperimentConfig(
        k=vals["k"],
        n=vals["n"],
        modulation=vals["mod"],
        channel=channel,
        detectors=kinds,
        snr_db=tuple(vals["snr"]),
        trials=vals["trials"],
        max_iters=vals["iters"],
        master_seed=vals["seed"],
        apsm_overrides=_apsm_overrides(vals, kinds),
    )


def _workers(vals: dict) -> int:
    w = vals["workers"]
    if w is None:
        w = os.cpu_count() or 1
    if w < 1:
        raise ConfigError("workers must be at least 1")
    return w


def _write_table(table, vals: dict) -> None:
    if vals["out"]:
        emit(table, vals["out"], vals["format"])
    else:
        sys.stdout.write(table_text(table, vals["format"]))


def _cmd_ser_iter(args) -> int:
    vals = _resolve(args)
    table = run_ser_vs_iter(_experiment_config(vals), workers=_workers(vals))
    _write_table(table, vals)
    return 0


def _cmd_ser_snr(args) -> int:
    vals = _resolve(args)
    table = run_ser_vs_snr(_experiment_config(vals), workers=_workers(vals))
    _write_table(table, vals)
    return 0


def _single_instance(vals: dict):
    if len(vals["snr"]) != 1:
        raise ConfigError("single-shot commands need exactly one --snr")
    cfg = _experiment_config(vals)
    c = constellation(cfg.modulation)
    inst = make_instance(cfg.channel, c, cfg.k, cfg.n, cfg.snr_db[0],
                         cfg.master_seed)
    return cfg, c, inst


def _cmd_detect(args) -> int:
    vals = _resolve(args)
    cfg, c, inst = _single_instance(vals)
    apsm_kinds = [k for k in cfg.detectors if k in _APSM_VARIANT]
    if vals["dump_trace"] and len(apsm_kinds) != 1:
        raise ConfigError("--dump-trace needs exactly one iterative detector")
    cost = QuadraticResidualCost(inst.H, inst.y)
    for kind in cfg.detectors:
        if kind in _APSM_VARIANT:
            x_hat, trace = detect(kind, inst, c, resolve_apsm_config(cfg, kind))
            if vals["dump_trace"]:
                trace.to_csv(vals["dump_trace"])
        else:
            x_hat, _ = detect(kind, inst, c)
        print(f"detector={kind.value} residual={cost.residual_sq(x_hat):.6e} "
              f"symbol_errors={symbol_errors(x_hat, inst.s, c)}")
    return 0


def _cmd_diagnose(args) -> int:
    vals = _resolve(args)
    cfg, c, inst = _single_instance(vals)
    apsm_kinds = [k for k in cfg.detectors if k in _APSM_VARIANT]
    kind = apsm_kinds[0] if apsm_kinds else DetectorKind.APSM_L1
    acfg = resolve_apsm_config(cfg, kind)
    cost = QuadraticResidualCost(inst.H, inst.y)
    report = diagnose(cost, acfg, c, inst.s)
    print(f"detector={kind.value} summable_beta={acfg.beta.summable}")
    print(report.to_json())
    ok = report.quasi_fejer.violations == 0 and report.attracting.violations == 0
    return 0 if ok else 1


def _cmd_validate(args) -> int:
    vals = _resolve(args)
    results = run_all_suites(seed=vals["seed"])
    for res in results:
        print(res.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sapsm",
                     description="Superiorized subgradient-projection MIMO "
                                 "detection experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, desc in (
        ("ser-iter", _cmd_ser_iter, "symbol error ratio per iteration"),
        ("ser-snr", _cmd_ser_snr, "symbol error ratio across an SNR grid"),
        ("detect", _cmd_detect, "run detectors on one seeded realization"),
        ("diagnose", _cmd_diagnose, "audit convergence inequalities of one run"),
        ("validate", _cmd_validate, "run the randomized invariant suites"),
    ):
        p = sub.add_parser(name, help=desc, parents=[])
        _add_common(p)
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line structured reporting
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
