"""Monte-Carlo experiment harness with deterministic parallel execution.

Every trial draws its own channel/noise realization from a counter-based
seed mix, and all detectors within a trial share that realization (paired
comparison). Aggregation is a plain integer sum, so results are identical
for any worker count.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .cost import ApsmConfig, standard_config
from .detectors import _APSM_VARIANT, DetectorKind, detect
from .errors import ConfigError
from .geometry import Constellation, constellation, nearest_level_indices
from .mimo import ChannelModel, make_instance, symbol_errors, trial_seed

CSV_HEADER = ("detector", "x_kind", "x_value", "errors", "symbols", "ser")


@dataclass(frozen=True)
class ExperimentConfig:
    k: int
    n: int
    modulation: str = "16qam"
    channel: ChannelModel = field(default_factory=ChannelModel)
    detectors: tuple[DetectorKind, ...] = ()
    snr_db: tuple[float, ...] = (9.0,)
    trials: int = 100
    max_iters: int = 300
    master_seed: int = 0
    apsm_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            kinds = tuple(DetectorKind(d) for d in self.detectors)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "detectors", kinds)
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.snr_db:
            raise ConfigError("snr grid must be nonempty")
        if not self.detectors:
            raise ConfigError("detector list must be nonempty")
        if len(set(self.detectors)) != len(self.detectors):
            raise ConfigError("duplicate detectors in list")
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"need 1 <= K <= N, got K={self.k}, N={self.n}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")


def resolve_apsm_config(cfg: ExperimentConfig, kind: DetectorKind) -> ApsmConfig:
    """Per-detector run parameters: override if given, defaults otherwise.

    The iteration budget always follows the experiment so per-iteration
    curves stay aligned across detectors.
    """
    base = cfg.apsm_overrides.get(kind)
    if base is None:
        base = standard_config(_APSM_VARIANT[kind], max_iters=cfg.max_iters)
    return replace(base, variant=_APSM_VARIANT[kind], max_iters=cfg.max_iters)


@dataclass(frozen=True)
class SerRow:
    detector: str
    x_kind: str
    x_value: float
    errors: int
    symbols: int

    @property
    def ser(self) -> float:
        return self.errors / self.symbols

    @property
    def standard_error(self) -> float:
        p = self.ser
        return float(np.sqrt(p * (1.0 - p) / self.symbols))

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "x_kind": self.x_kind,
            "x_value": self.x_value,
            "errors": self.errors,
            "symbols": self.symbols,
            "ser": self.ser,
        }


@dataclass
class SerTable:
    rows: list[SerRow]

    def sorted_rows(self) -> list[SerRow]:
        return sorted(self.rows, key=lambda r: (r.detector, r.x_value))


def _errors_per_iteration(iterates: np.ndarray, s: np.ndarray,
                          c: Constellation, k: int) -> np.ndarray:
    """Complex-symbol error count of every iterate (rows) at once."""
    idx = nearest_level_indices(iterates, c.levels)
    ref = nearest_level_indices(s, c.levels)
    wrong = idx != ref[None, :]
    return np.count_nonzero(wrong[:, :k] | wrong[:, k:], axis=1)


def _trial_errors_iter(cfg: ExperimentConfig, c: Constellation,
                       t: int) -> dict[DetectorKind, np.ndarray]:
    seed = trial_seed(cfg.master_seed, t)
    inst = make_instance(cfg.channel, c, cfg.k, cfg.n, cfg.snr_db[0], seed)
    out = {}
    for kind in cfg.detectors:
        if kind in _APSM_VARIANT:
            acfg = resolve_apsm_config(cfg, kind)
            _, trace = detect(kind, inst, c, acfg, record_iterates=True)
            errs = _errors_per_iteration(trace.iterates[1:], inst.s, c, cfg.k)
            if errs.size < cfg.max_iters:
                # early stop: the iterate is frozen, extend the last value
                errs = np.concatenate([
                    errs, np.full(cfg.max_iters - errs.size, errs[-1], dtype=errs.dtype)
                ])
        else:
            x_hat, _ = detect(kind, inst, c)
            errs = np.full(cfg.max_iters, symbol_errors(x_hat, inst.s, c), dtype=np.int64)
        out[kind] = errs
    return out


def _trial_errors_snr(cfg: ExperimentConfig, c: Constellation,
                      flat: int) -> dict[DetectorKind, int]:
    si, t = divmod(flat, cfg.trials)
    seed = trial_seed(cfg.master_seed, si, t)
    inst = make_instance(cfg.channel, c, cfg.k, cfg.n, cfg.snr_db[si], seed)
    out = {}
    for kind in cfg.detectors:
        if kind in _APSM_VARIANT:
            acfg = resolve_apsm_config(cfg, kind)
            x_hat, _ = detect(kind, inst, c, acfg)
        else:
            x_hat, _ = detect(kind, inst, c)
        out[kind] = symbol_errors(x_hat, inst.s, c)
    return out


_worker_limiter = None


def _init_worker():
    # small-matrix workloads: BLAS thread pools only add contention
    global _worker_limiter
    try:
        from threadpoolctl import threadpool_limits

        _worker_limiter = threadpool_limits(limits=1)
    except ImportError:
        pass


def _map_tasks(fn, tasks: range, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return map(fn, tasks)

    def parallel():
        chunk = max(1, len(tasks) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_init_worker) as executor:
            yield from executor.map(fn, tasks, chunksize=chunk)

    return parallel()


def run_ser_vs_iter(cfg: ExperimentConfig, workers: int = 1) -> SerTable:
    """Symbol error ratio per iteration, averaged over paired trials.

    Non-iterative baselines appear as flat lines. Requires a single SNR point.
    """
    if len(cfg.snr_db) != 1:
        raise ConfigError("iteration sweeps need exactly one SNR point")
    c = constellation(cfg.modulation)
    totals = {kind: np.zeros(cfg.max_iters, dtype=np.int64) for kind in cfg.detectors}
    fn = partial(_trial_errors_iter, cfg, c)
    for result in _map_tasks(fn, range(cfg.trials), workers):
        for kind, errs in result.items():
            totals[kind] += errs
    symbols = cfg.k * cfg.trials
    rows = [
        SerRow(kind.value, "iter", float(it + 1), int(totals[kind][it]), symbols)
        for kind in cfg.detectors
        for it in range(cfg.max_iters)
    ]
    return SerTable(sorted(rows, key=lambda r: (r.detector, r.x_value)))


def run_ser_vs_snr(cfg: ExperimentConfig, workers: int = 1) -> SerTable:
    """Symbol error ratio of the final estimate across the SNR grid."""
    c = constellation(cfg.modulation)
    totals = {(kind, si): 0 for kind in cfg.detectors for si in range(len(cfg.snr_db))}
    fn = partial(_trial_errors_snr, cfg, c)
    n_tasks = len(cfg.snr_db) * cfg.trials
    for flat, result in zip(range(n_tasks), _map_tasks(fn, range(n_tasks), workers)):
        si = flat // cfg.trials
        for kind, errs in result.items():
            totals[(kind, si)] += errs
    symbols = cfg.k * cfg.trials
    rows = [
        SerRow(kind.value, "snr_db", cfg.snr_db[si], totals[(kind, si)], symbols)
        for kind in cfg.detectors
        for si in range(len(cfg.snr_db))
    ]
    return SerTable(sorted(rows, key=lambda r: (r.detector, r.x_value)))


def table_text(table: SerTable, fmt: str = "csv", include_se: bool = False) -> str:
    """Render a table with a stable row order and byte-stable formatting.

    ``include_se`` appends a binomial standard-error column; it is off by
    default to keep golden files small.
    """
    rows = table.sorted_rows()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER + (("se",) if include_se else ()))
        for r in rows:
            record = [
                r.detector, r.x_kind,
                format(r.x_value, ".17g"),
                r.errors, r.symbols,
                format(r.ser, ".17g"),
            ]
            if include_se:
                record.append(format(r.standard_error, ".17g"))
            writer.writerow(record)
        return buf.getvalue()
    if fmt == "json":
        payload = [r.to_dict() for r in rows]
        if include_se:
            for rec, r in zip(payload, rows):
                rec["se"] = r.standard_error
        body = json.dumps({"rows": payload}, sort_keys=True,
                          separators=(",", ":"))
        return body + "\n"
    raise ConfigError(f"unknown output format {fmt!r}")


def emit(table: SerTable, path, fmt: str = "csv", include_se: bool = False) -> None:
    text = table_text(table, fmt, include_se=include_se)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write table to {path}: {exc}") from exc


def table_from_json(path) -> SerTable:
    with open(path) as fh:
        payload = json.load(fh)
    rows = []
    for rec in payload["rows"]:
        row = SerRow(rec["detector"], rec["x_kind"], float(rec["x_value"]),
                     int(rec["errors"]), int(rec["symbols"]))
        if row.ser != rec["ser"]:
            raise ConfigError("stored ser is inconsistent with errors/symbols")
        rows.append(row)
    return SerTable(rows)
