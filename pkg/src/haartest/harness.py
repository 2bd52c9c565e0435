"""Configuration-driven Monte Carlo sweeps.

A sweep draws R samples of N matrices for every grid step, evaluates the
configured statistics on each, and compares every cohort with a Haar
reference cohort through the k-sample Anderson-Darling test and an
empirical power estimate.

Streams: cohort ``c`` uses ``master.split(c)`` with the Haar reference at
``c = 0`` and grid step ``i`` at ``c = i + 1``; replicate ``r`` of a cohort
uses ``cohort.split(r)`` and matrix ``j`` inside it uses a further split.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import kernels as K
from . import statistics as S
from .errors import HaarTestError
from .nulldist import ad_ksample, tz_null_quantile
from .rng import ALGORITHM, ALGORITHM_VERSION, RngStream
from .samplers import SamplerSpec, draw_sample, jor_split

STATISTICS = ("rayleigh", "gine", "expfam", "tz", "uzq", "trace")
REPORT_VERSION = 1
HIST_BINS = 40


@dataclass(frozen=True)
class StatisticSpec:
    name: str
    z: float | None = None
    q: float | None = None
    k: int | None = None
    allow_det_minus: bool = False
    strict: bool = False

    def __post_init__(self):
        if self.name not in STATISTICS:
            raise ValueError(f"unknown statistic {self.name!r}")
        if self.name in ("tz", "uzq") and self.z is None:
            raise ValueError(f"{self.name} needs z")
        if self.name == "uzq" and self.q is None:
            raise ValueError("uzq needs q")
        if self.name == "trace" and self.k is None:
            raise ValueError("trace needs k")

    @property
    def label(self) -> str:
        if self.name == "tz":
            return f"tz[z={self.z:g}]"
        if self.name == "uzq":
            return f"uzq[z={self.z:g},q={self.q:g}]"
        if self.name == "trace":
            return f"trace[k={self.k}]"
        return self.name

    def kernel_params(self) -> K.KernelParams:
        return K.KernelParams(z=self.z if self.z is not None else 0.5, q=self.q, strict=self.strict)

    def evaluate(self, G: np.ndarray) -> float:
        if self.name == "rayleigh":
            return S.rayleigh(G).value
        if self.name == "gine":
            return S.gine(G).value
        if self.name == "expfam":
            return S.expfam_statistic(G, self.allow_det_minus, self.strict).value
        if self.name == "tz":
            return S.t_z(G, self.kernel_params(), self.allow_det_minus).value
        if self.name == "uzq":
            return S.u_zq(G, self.kernel_params()).value
        return S.trace_power(G, self.k).value

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class HaarReference:
    mode: str = "fresh"  # or "cached"
    path: str | None = None

    def __post_init__(self):
        if self.mode not in ("fresh", "cached"):
            raise ValueError(f"haar_reference mode must be fresh or cached, got {self.mode!r}")
        if self.mode == "cached" and not self.path:
            raise ValueError("a cached Haar reference needs a path")


def _step_key(step) -> str:
    return f"{step[0]}:{step[1]}" if isinstance(step, (tuple, list)) else str(step)


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int
    N: int
    R: int
    sampler: SamplerSpec
    grid: tuple
    statistics: tuple[StatisticSpec, ...]
    seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    haar_reference: HaarReference = field(default_factory=HaarReference)
    alpha: float = 0.05

    def __post_init__(self):
        if self.R < 1 or self.N < 1:
            raise ValueError("R and N must be positive")
        if not self.grid:
            raise ValueError("the step grid is empty")
        if not self.statistics:
            raise ValueError("no statistics configured")
        if self.sampler.dim != self.dim:
            raise ValueError(f"sampler dim {self.sampler.dim} differs from config dim {self.dim}")
        if self.threads < 1:
            raise ValueError("threads must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def spec_at(self, step) -> SamplerSpec:
        """Sampler for one grid step; JOR steps are [M1, M2] or an iteration count."""
        if self.sampler.kind == "jor":
            m1, m2 = step if isinstance(step, (tuple, list)) else jor_split(int(step))
            return replace(self.sampler, m1=int(m1), m2=int(m2))
        if self.sampler.kind == "haar":
            return self.sampler
        return replace(self.sampler, steps=int(step))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "N": self.N,
            "R": self.R,
            "sampler": self.sampler.to_dict(),
            "grid": [list(s) if isinstance(s, (tuple, list)) else s for s in self.grid],
            "statistics": [s.to_dict() for s in self.statistics],
            "seed": self.seed,
            "out_dir": self.out_dir,
            "threads": self.threads,
            "haar_reference": asdict(self.haar_reference),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        missing = {"dim", "N", "R", "sampler", "grid", "statistics"} - set(d)
        if missing:
            raise ValueError(f"missing config keys {sorted(missing)}")
        sampler = d.pop("sampler")
        sampler = SamplerSpec.from_dict(sampler) if isinstance(sampler, dict) else sampler
        grid = tuple(tuple(s) if isinstance(s, list) else s for s in d.pop("grid"))
        stats_ = tuple(
            s if isinstance(s, StatisticSpec) else StatisticSpec(**s) for s in d.pop("statistics")
        )
        ref = d.pop("haar_reference", None) or {}
        ref = ref if isinstance(ref, HaarReference) else HaarReference(**ref)
        return cls(sampler=sampler, grid=grid, statistics=stats_, haar_reference=ref, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# Cohorts
# ---------------------------------------------------------------------------


@dataclass
class Cohort:
    """R replicate values per statistic label; NaN marks a failed replicate."""

    values: dict[str, np.ndarray]
    errors: dict[str, list[str]]
    seconds: float = 0.0


def _replicate(spec: SamplerSpec, N: int, stats_: Sequence[StatisticSpec], rng: RngStream):
    G = draw_sample(spec, N, rng)
    out, errs = {}, {}
    for st in stats_:
        try:
            out[st.label] = float(st.evaluate(G))
        except HaarTestError as exc:
            out[st.label] = math.nan
            errs[st.label] = f"{type(exc).__name__}: {exc}"
    return out, errs


def run_cohort(
    spec: SamplerSpec,
    N: int,
    R: int,
    stats_: Sequence[StatisticSpec],
    root: RngStream,
    threads: int = 1,
) -> Cohort:
    t0 = time.perf_counter()
    jobs = [root.split(r) for r in range(R)]
    if threads == 1:
        results = [_replicate(spec, N, stats_, rng) for rng in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda rng: _replicate(spec, N, stats_, rng), jobs))
    values = {st.label: np.array([res[0][st.label] for res in results]) for st in stats_}
    errors = {
        st.label: [f"replicate {r}: {res[1][st.label]}" for r, res in enumerate(results) if st.label in res[1]]
        for st in stats_
    }
    return Cohort(values, errors, time.perf_counter() - t0)


def _reference_key(config: ExperimentConfig) -> str:
    payload = json.dumps(
        {
            "dim": config.dim,
            "N": config.N,
            "R": config.R,
            "seed": config.seed,
            "statistics": [s.to_dict() for s in config.statistics],
            "rng": [ALGORITHM, ALGORITHM_VERSION],
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def haar_reference(config: ExperimentConfig, master: RngStream) -> Cohort:
    """The Haar cohort, loaded from or written to the cache when configured."""
    spec = SamplerSpec("haar", config.dim)
    ref = config.haar_reference
    key = _reference_key(config)
    path = Path(ref.path) if ref.mode == "cached" else None
    if path is not None and path.exists():
        data = json.loads(path.read_text())
        if data.get("key") == key:
            vals = {k: np.array([math.nan if v is None else v for v in vs]) for k, vs in data["values"].items()}
            return Cohort(vals, data.get("errors", {}), 0.0)
    cohort = run_cohort(spec, config.N, config.R, config.statistics, master.split(0), config.threads)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "key": key,
            "values": {k: [None if math.isnan(x) else x for x in v.tolist()] for k, v in cohort.values.items()},
            "errors": cohort.errors,
        }
        path.write_text(json.dumps(payload))
    return cohort


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def estimate_power(alt_values, null_values, alpha: float = 0.05) -> float:
    """Fraction of ``alt_values`` strictly above the empirical (1 - alpha) null quantile."""
    alt = np.asarray(alt_values, dtype=float)
    null = np.asarray(null_values, dtype=float)
    alt, null = alt[~np.isnan(alt)], null[~np.isnan(null)]
    if alt.size == 0 or null.size == 0:
        raise ValueError("power needs nonempty cohorts")
    crit = float(np.quantile(null, 1.0 - alpha, method="inverted_cdf"))
    return float(np.mean(alt > crit))


@dataclass
class CellResult:
    step: Any
    statistic: str
    values: np.ndarray
    ad_statistic: float | None
    ad_pvalue: float | None
    power: float | None
    errors: list[str]
    asymptotic_cutoff: float | None = None
    asymptotic_power: float | None = None

    def to_dict(self) -> dict:
        return {
            "step": list(self.step) if isinstance(self.step, tuple) else self.step,
            "statistic": self.statistic,
            "values": [None if math.isnan(v) else v for v in self.values.tolist()],
            "ad_statistic": self.ad_statistic,
            "ad_pvalue": self.ad_pvalue,
            "power": self.power,
            "errors": self.errors,
            "asymptotic_cutoff": self.asymptotic_cutoff,
            "asymptotic_power": self.asymptotic_power,
        }


@dataclass
class SweepReport:
    config: ExperimentConfig
    reference: dict[str, np.ndarray]
    cells: list[CellResult]
    runtimes: dict[str, float] = field(default_factory=dict)

    def cell(self, step, statistic: str) -> CellResult:
        for c in self.cells:
            if _step_key(c.step) == _step_key(step) and c.statistic == statistic:
                return c
        raise KeyError((step, statistic))

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "config": self.config.to_dict(),
            "provenance": {
                "rng": ALGORITHM,
                "rng_version": ALGORITHM_VERSION,
                "seed": self.config.seed,
                "reference_key": _reference_key(self.config),
            },
            "reference": {
                k: [None if math.isnan(x) else x for x in v.tolist()] for k, v in self.reference.items()
            },
            "cells": [c.to_dict() for c in self.cells],
        }


def _compare(step, st: StatisticSpec, alt: np.ndarray, null: np.ndarray, errors, config) -> CellResult:
    a, b = alt[~np.isnan(alt)], null[~np.isnan(null)]
    ad_stat = ad_p = power = None
    if a.size and b.size:
        power = estimate_power(a, b, config.alpha)
        try:
            ad = ad_ksample([a, b])
            ad_stat, ad_p = ad.statistic, ad.pvalue
        except (HaarTestError, ValueError) as exc:
            errors = errors + [f"ad_ksample: {exc}"]
    cell = CellResult(step, st.label, alt, ad_stat, ad_p, power, errors)
    if st.name == "tz" and config.dim % 2 == 1 and a.size:
        # asymptotic cutoff from the limiting chi-square mixture, reported alongside
        cut = _asymptotic_cutoff(config.dim // 2, st.z, 1.0 - config.alpha, config.seed)
        cell.asymptotic_cutoff = cut
        cell.asymptotic_power = float(np.mean(a > cut))
    return cell


@lru_cache(maxsize=32)
def _asymptotic_cutoff(rank: int, z: float, prob: float, seed: int) -> float:
    return tz_null_quantile(rank, z, prob, seed=seed).quantile


def run_sweep(config: ExperimentConfig) -> SweepReport:
    master = RngStream(config.seed)
    t0 = time.perf_counter()
    ref = haar_reference(config, master)
    runtimes = {"haar_reference": ref.seconds}
    cells = []
    for i, step in enumerate(config.grid):
        spec = config.spec_at(step)
        cohort = run_cohort(spec, config.N, config.R, config.statistics, master.split(i + 1), config.threads)
        runtimes[f"step {_step_key(step)}"] = cohort.seconds
        for st in config.statistics:
            cells.append(
                _compare(step, st, cohort.values[st.label], ref.values[st.label], cohort.errors[st.label], config)
            )
    runtimes["total"] = time.perf_counter() - t0
    return SweepReport(config, ref.values, cells, runtimes)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def histogram_rows(report: SweepReport, bins: int = HIST_BINS):
    for c in report.cells:
        alt = c.values[~np.isnan(c.values)]
        null = report.reference[c.statistic]
        null = null[~np.isnan(null)]
        both = np.concatenate([alt, null])
        if both.size == 0:
            continue
        edges = np.histogram_bin_edges(both, bins=bins)
        for cohort, vals in (("null", null), ("alternative", alt)):
            counts, _ = np.histogram(vals, bins=edges)
            for left, right, n in zip(edges[:-1], edges[1:], counts):
                yield (c.statistic, _step_key(c.step), left, right, int(n), cohort)


def emit_report(report: SweepReport, out_dir=None, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    """Write detail/summary/histogram CSVs and/or a JSON mirror; returns the paths."""
    out = Path(out_dir if out_dir is not None else report.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ValueError(f"unknown report formats {sorted(bad)}")
    written = []
    kind = report.config.sampler.kind
    if "csv" in formats:
        p = out / "detail.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sampler", "step", "statistic", "replicate", "value"])
            for c in report.cells:
                for r, v in enumerate(c.values):
                    w.writerow([kind, _step_key(c.step), c.statistic, r, _fmt(v)])
        written.append(p)
        p = out / "summary.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "statistic", "ad_stat", "ad_pvalue", "power_05"])
            for c in report.cells:
                w.writerow([_step_key(c.step), c.statistic, _fmt(c.ad_statistic), _fmt(c.ad_pvalue), _fmt(c.power)])
        written.append(p)
        p = out / "histogram.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["statistic", "step", "bin_left", "bin_right", "count", "cohort"])
            for row in histogram_rows(report):
                w.writerow([row[0], row[1], _fmt(row[2]), _fmt(row[3]), row[4], row[5]])
        written.append(p)
    if "json" in formats:
        p = out / "report.json"
        p.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True))
        written.append(p)
    # wall-clock numbers live apart so the reports above stay reproducible
    p = out / "timing.json"
    p.write_text(json.dumps(report.runtimes, indent=1, sort_keys=True))
    written.append(p)
    return written


def load_report_config(path) -> ExperimentConfig:
    """Config echo of a JSON report."""
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text())["config"])


def _nan_array(vals) -> np.ndarray:
    return np.array([math.nan if v is None else v for v in vals], dtype=float)


def load_report(path) -> SweepReport:
    """Rebuild a SweepReport from its JSON mirror (runtimes are not part of it)."""
    data = json.loads(Path(path).read_text())
    if data.get("version") != REPORT_VERSION:
        raise ValueError(f"unsupported report version {data.get('version')!r}")
    config = ExperimentConfig.from_dict(data["config"])
    cells = []
    for c in data["cells"]:
        step = tuple(c["step"]) if isinstance(c["step"], list) else c["step"]
        cells.append(CellResult(
            step, c["statistic"], _nan_array(c["values"]), c["ad_statistic"], c["ad_pvalue"], c["power"],
            list(c["errors"]), c.get("asymptotic_cutoff"), c.get("asymptotic_power"),
        ))
    reference = {k: _nan_array(v) for k, v in data["reference"].items()}
    return SweepReport(config, reference, cells)
