"""Experiment runner: factor sweeps, result tables, post-processing.

A sweep iterates the factor cross-product in a documented order (canonical
factor-field order, values nested left to right), estimates each cell with
seeds derived from (master seed, cell index, trace index), journals
per-cell results so interrupted runs resume, and writes the results CSV
atomically. Wall-clock runtimes live in the journal only, keeping the CSV
byte-identical across reruns with the same master seed.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from . import calibration as cal_mod
from .calibration import CalibrationProfile
from .forwarder import FactorConfig, run_cell
from .kernel import derive_seed
from .smc import required_samples

RESULTS_SCHEMA = "ndnsmc-results-v1"
EFFECTS_SCHEMA = "ndnsmc-effects-v1"
SERIES_SCHEMA = "ndnsmc-series-v1"

#: Canonical factor order; sweeps nest their cross-product in this order.
FACTOR_FIELDS = (
    "n_forwarding_threads",
    "name_length",
    "payload_len",
    "send_interval",
    "queue_capacity",
    "numa_placement",
)

RESULT_COLUMNS = FACTOR_FIELDS + (
    "p_hat", "mean_ratio", "stderr", "n_samples", "drops_total")


class ConfigError(ValueError):
    pass


class BudgetError(RuntimeError):
    pass


@dataclass
class SweepSpec:
    """A factor grid plus the fixed parameters shared by every cell."""

    factors: dict
    horizon: int = 10_000_000
    warmup: Optional[int] = None
    cooldown: Optional[int] = None
    alpha: float = 0.1
    delta_conf: float = 0.1
    n_traces: Optional[int] = None  # override the bound-derived count
    master_seed: int = 0
    calibration: Optional[str] = None  # path; None = shipped synthetic
    output: str = "results.csv"

    def validate(self) -> "SweepSpec":
        if not self.factors:
            raise ConfigError("sweep needs at least one factor")
        for name, values in self.factors.items():
            if name not in FACTOR_FIELDS:
                raise ConfigError(f"unknown factor {name!r}; valid: "
                                  f"{', '.join(FACTOR_FIELDS)}")
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(f"factor {name!r} needs a non-empty list")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        return self

    @staticmethod
    def from_json(path) -> "SweepSpec":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in SweepSpec.__dataclass_fields__.values()}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        return SweepSpec(**raw).validate()

    def traces_per_cell(self) -> int:
        if self.n_traces is not None:
            return self.n_traces
        return required_samples(self.alpha, self.delta_conf)

    def cells(self) -> list[dict]:
        """Factor combinations in canonical cross-product order."""
        names = [f for f in FACTOR_FIELDS if f in self.factors]
        value_lists = [self.factors[name] for name in names]
        out = []
        for combo in itertools.product(*value_lists):
            out.append(dict(zip(names, combo)))
        return out

    def cell_config(self, factors: dict) -> FactorConfig:
        return FactorConfig(horizon=self.horizon, warmup=self.warmup,
                            cooldown=self.cooldown, **factors).validate()

    def digest(self) -> str:
        payload = {
            "factors": {k: list(v) for k, v in sorted(self.factors.items())},
            "horizon": self.horizon, "warmup": self.warmup,
            "cooldown": self.cooldown, "alpha": self.alpha,
            "delta_conf": self.delta_conf, "n_traces": self.n_traces,
            "master_seed": self.master_seed,
            "calibration": self.calibration,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.blake2b(blob, digest_size=12).hexdigest()


@dataclass
class ResultRow:
    factors: dict
    p_hat: float
    mean_ratio: float
    stderr: float
    n_samples: int
    drops_total: float
    drops_per_queue: dict = field(default_factory=dict)
    runtime_s: float = 0.0  # diagnostics; journal-only, not in the CSV

    def csv_record(self) -> dict:
        rec = {name: self.factors.get(name, "") for name in FACTOR_FIELDS}
        rec.update(p_hat=repr(self.p_hat), mean_ratio=repr(self.mean_ratio),
                   stderr=repr(self.stderr), n_samples=self.n_samples,
                   drops_total=repr(self.drops_total))
        return rec


def load_calibration(path: Optional[str]) -> CalibrationProfile:
    if path is None or path == "synthetic":
        return cal_mod.synthetic_profile()
    return CalibrationProfile.from_json(path)


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


def run_one_cell(spec_payload: dict, cell_index: int) -> dict:
    """Estimate one cell; module-level so process pools can run it."""
    spec = SweepSpec(**spec_payload)
    factors = spec.cells()[cell_index]
    cfg = spec.cell_config(factors)
    cal = load_calibration(spec.calibration)
    n = spec.traces_per_cell()
    cell_seed = derive_seed(spec.master_seed, cell_index)
    started = time.monotonic()
    ratios = []
    all_sat = 0
    drops_by_queue: dict[str, float] = {}
    for i in range(n):
        counters, _ = run_cell(cfg, cal, derive_seed(cell_seed, i))
        if counters.ratio_sent <= 0:
            raise ConfigError(
                f"cell {cell_index}: no Interests in the counting window "
                f"(factors {factors})")
        ratio = counters.ratio_satisfied / counters.ratio_sent
        ratios.append(ratio)
        if counters.ratio_satisfied == counters.ratio_sent:
            all_sat += 1
        for q, d in counters.queue_drops.items():
            drops_by_queue[q] = drops_by_queue.get(q, 0) + d
    mean = sum(ratios) / n
    if n > 1:
        var = sum((r - mean) ** 2 for r in ratios) / (n - 1)
        stderr = (var / n) ** 0.5
    else:
        stderr = 0.0
    drops_per_queue = {q: d / n for q, d in sorted(drops_by_queue.items())}
    return {
        "cell_index": cell_index,
        "factors": factors,
        "p_hat": all_sat / n,
        "mean_ratio": mean,
        "stderr": stderr,
        "n_samples": n,
        "drops_total": sum(drops_per_queue.values()),
        "drops_per_queue": drops_per_queue,
        "runtime_s": time.monotonic() - started,
    }


# ---------------------------------------------------------------------------
# Journal + sweep driver
# ---------------------------------------------------------------------------


def _journal_path(output: str) -> str:
    return output + ".journal"


def _load_journal(path: str, digest: str) -> dict[int, dict]:
    done: dict[int, dict] = {}
    if not os.path.exists(path):
        return done
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("digest") != digest:
                return {}  # journal from a different configuration
            done[rec["cell_index"]] = rec
    return done


def _append_journal(path: str, digest: str, rec: dict):
    rec = dict(rec, digest=digest)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _write_atomic(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def results_csv_text(rows: list[ResultRow]) -> str:
    import io

    buf = io.StringIO()
    buf.write(f"# schema={RESULTS_SCHEMA}\n")
    writer = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.csv_record())
    return buf.getvalue()


def run_sweep(spec: SweepSpec, jobs: int = 1,
              budget: Optional[int] = None) -> list[ResultRow]:
    """Estimate every cell of the grid and write the results CSV.

    Per-cell results are journalled as they complete; rerunning after an
    interruption recomputes only missing cells and produces a byte-identical
    CSV (seeds depend only on the master seed and cell/trace indices).
    """
    spec.validate()
    cells = spec.cells()
    n_traces = spec.traces_per_cell()
    projected = len(cells) * n_traces
    if budget is not None and projected > budget:
        raise BudgetError(
            f"sweep would run {projected} traces "
            f"({len(cells)} cells x {n_traces}), over the budget of {budget}")
    # Fail early on bad cells or missing calibration entries.
    cal = load_calibration(spec.calibration)
    for factors in cells:
        cfg = spec.cell_config(factors)
        if not cal.covers(cfg.name_length, cfg.numa_placement,
                          cfg.n_forwarding_threads):
            raise ConfigError(f"calibration does not cover cell {factors}")

    digest = spec.digest()
    journal = _journal_path(spec.output)
    done = _load_journal(journal, digest)
    if not done and os.path.exists(journal):
        os.remove(journal)  # stale journal from another configuration
    pending = [i for i in range(len(cells)) if i not in done]

    spec_payload = {f.name: getattr(spec, f.name)
                    for f in SweepSpec.__dataclass_fields__.values()}
    if pending:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {
                    i: pool.submit(run_one_cell, spec_payload, i)
                    for i in pending
                }
                for i in pending:
                    rec = futures[i].result()
                    _append_journal(journal, digest, rec)
                    done[i] = rec
        else:
            for i in pending:
                rec = run_one_cell(spec_payload, i)
                _append_journal(journal, digest, rec)
                done[i] = rec

    rows = []
    for i in range(len(cells)):
        rec = done[i]
        rows.append(ResultRow(
            factors=rec["factors"], p_hat=rec["p_hat"],
            mean_ratio=rec["mean_ratio"], stderr=rec["stderr"],
            n_samples=rec["n_samples"], drops_total=rec["drops_total"],
            drops_per_queue=rec.get("drops_per_queue", {}),
            runtime_s=rec.get("runtime_s", 0.0)))
    _write_atomic(spec.output, results_csv_text(rows))
    return rows


def read_results_csv(path) -> list[ResultRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# schema="):
            raise ConfigError(f"{path}: missing schema line")
        schema = first.strip().split("=", 1)[1]
        if schema != RESULTS_SCHEMA:
            raise ConfigError(f"{path}: unsupported schema {schema!r}")
        for rec in csv.DictReader(fh):
            factors = {}
            for name in FACTOR_FIELDS:
                value = rec[name]
                if value == "":
                    continue
                factors[name] = value if name == "numa_placement" else int(value)
            rows.append(ResultRow(
                factors=factors,
                p_hat=float(rec["p_hat"]),
                mean_ratio=float(rec["mean_ratio"]),
                stderr=float(rec["stderr"]),
                n_samples=int(rec["n_samples"]),
                drops_total=float(rec["drops_total"])))
    return rows


# ---------------------------------------------------------------------------
# Post-processing: main effects and plot series
# ---------------------------------------------------------------------------


@dataclass
class MainEffectsTable:
    response: str
    grand_mean: float
    # factor -> list of (level, mean response, cell count), level order kept
    effects: dict

    def check_consistency(self, tol: float = 1e-12):
        for factor, levels in self.effects.items():
            total = sum(mean * count for _, mean, count in levels)
            count = sum(count for _, _, count in levels)
            if abs(total / count - self.grand_mean) > tol * max(
                    1.0, abs(self.grand_mean)):
                raise AssertionError(
                    f"main effects inconsistent for {factor}")


def main_effects(rows: list[ResultRow],
                 response: str = "mean_ratio") -> MainEffectsTable:
    """Per-factor level means of the response, plus the grand mean."""
    if not rows:
        raise ConfigError("no rows")
    values = [getattr(r, response) for r in rows]
    grand = sum(values) / len(values)
    effects: dict = {}
    swept = [f for f in FACTOR_FIELDS
             if len({str(r.factors.get(f)) for r in rows}) > 1]
    if not swept:
        raise ConfigError("need at least one factor with two levels")
    for factor in swept:
        seen = []
        for r in rows:  # preserve first-appearance level order
            lv = r.factors.get(factor)
            if lv not in seen:
                seen.append(lv)
        levels = []
        for lv in seen:
            cell = [getattr(r, response) for r in rows
                    if r.factors.get(factor) == lv]
            levels.append((lv, sum(cell) / len(cell), len(cell)))
        effects[factor] = levels
    return MainEffectsTable(response, grand, effects)


def effects_csv_text(table: MainEffectsTable) -> str:
    import io

    buf = io.StringIO()
    buf.write(f"# schema={EFFECTS_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["factor", "level", "mean", "cells"])
    writer.writerow(["(grand)", "", repr(table.grand_mean), ""])
    for factor, levels in table.effects.items():
        for level, mean, count in levels:
            writer.writerow([factor, level, repr(mean), count])
    return buf.getvalue()


def emit_series(rows: list[ResultRow], x: str, curve: str) -> str:
    """Long-format CSV (x, curve label, mean, stderr) for plotting.

    Missing grid cells appear as rows with empty mean/stderr fields rather
    than being silently omitted.
    """
    if x not in FACTOR_FIELDS or curve not in FACTOR_FIELDS:
        raise ConfigError(f"x and curve must be factor names: {FACTOR_FIELDS}")
    xs, curves = [], []
    for r in rows:
        if r.factors.get(x) not in xs:
            xs.append(r.factors.get(x))
        if r.factors.get(curve) not in curves:
            curves.append(r.factors.get(curve))
    index = {(r.factors.get(x), r.factors.get(curve)): r for r in rows}
    import io

    buf = io.StringIO()
    buf.write(f"# schema={SERIES_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([x, curve, "mean_ratio", "stderr"])
    for cv in curves:
        for xv in xs:
            row = index.get((xv, cv))
            if row is None:
                writer.writerow([xv, cv, "", ""])
            else:
                writer.writerow([xv, cv, repr(row.mean_ratio),
                                 repr(row.stderr)])
    return buf.getvalue()
