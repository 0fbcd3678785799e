"""Paired multi-seed comparison of baseline and MIQA-PNS training."""

from __future__ import annotations

import csv
import dataclasses
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .metrics import MetricsReport, evaluate
from .synthetic import SCENARIOS, generate_dataset, make_split
from .training import TrainConfig, TrainHistory, train

CSV_COLUMNS = (
    "seed",
    "mode",
    "scenario",
    "precision",
    "recall",
    "f1",
    "deficient_accuracy",
    "pns_proxy",
    "mono_violation",
    "epochs_trained",
)
SUMMARY_METRICS = ("precision", "recall", "f1", "deficient_accuracy", "pns_proxy", "mono_violation")


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 2825
    proportions: dict | None = None
    height: int = 32
    width: int = 32
    limited_artifact_fraction: float = 0.5

    def generate(self, seed: int):
        return generate_dataset(
            self.n,
            self.proportions,
            seed=seed,
            height=self.height,
            width=self.width,
            limited_artifact_fraction=self.limited_artifact_fraction,
        )


@dataclass
class RunRecord:
    report: MetricsReport
    history: TrainHistory


def run_cell(config: TrainConfig, generator: GeneratorConfig, scenario: str, seed: int) -> RunRecord:
    """Generate, split, train and evaluate one (seed, mode) cell from scratch."""
    data = generator.generate(seed)
    split = make_split(data, scenario, seed)
    cfg = dataclasses.replace(config, seed=seed)
    result = train(cfg, (data.features(split.train), data.labels(split.train)), (data.features(split.val), data.labels(split.val)))
    report = evaluate(result.model, data.features(split.test), data.labels(split.test))
    h = result.history
    report.seed, report.mode, report.scenario = seed, cfg.mode, scenario
    report.epochs_trained, report.best_epoch = h.epochs_trained, h.best_epoch
    report.train_loss, report.val_loss = list(h.train_loss), list(h.val_loss)
    return RunRecord(report, h)


def _run_cell_args(args):
    return run_cell(*args)


def _mean_std(values) -> tuple[float, float] | None:
    values = [v for v in values if v is not None]
    if not values:
        return None
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


@dataclass
class Comparison:
    scenario: str
    seeds: list[int]
    base: list[RunRecord] = field(default_factory=list)
    pns: list[RunRecord] = field(default_factory=list)

    @property
    def rows(self) -> list[dict]:
        out = []
        for b, p in zip(self.base, self.pns):
            for rec in (b, p):
                r = rec.report
                out.append({k: getattr(r, k) for k in CSV_COLUMNS})
        return out

    def summary(self) -> dict:
        """Per-mode mean/stddev and paired (pns - baseline) deltas per metric."""
        out = {"scenario": self.scenario, "n_seeds": len(self.seeds), "modes": {}, "delta": {}}
        for label, records in (("baseline", self.base), ("miqa-pns", self.pns)):
            out["modes"][label] = {m: _mean_std(getattr(r.report, m) for r in records) for m in SUMMARY_METRICS}
        for m in SUMMARY_METRICS:
            diffs = []
            for b, p in zip(self.base, self.pns):
                vb, vp = getattr(b.report, m), getattr(p.report, m)
                if vb is not None and vp is not None:
                    diffs.append(vp - vb)
            out["delta"][m] = _mean_std(diffs)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def summary_lines(self) -> list[str]:
        s = self.summary()
        lines = []
        for mode, stats in s["modes"].items():
            parts = [f"{m}={_fmt(stats[m])}" for m in SUMMARY_METRICS]
            lines.append(f"{mode} [{self.scenario}, {len(self.seeds)} seeds]: " + " ".join(parts))
        parts = [f"{m}={_fmt(s['delta'][m])}" for m in SUMMARY_METRICS]
        lines.append("delta (miqa-pns - baseline): " + " ".join(parts))
        return lines


def _fmt(ms) -> str:
    return "n/a" if ms is None else f"{ms[0]:.4f}+-{ms[1]:.4f}"


def compare(
    config_base: TrainConfig,
    config_pns: TrainConfig,
    scenario: str,
    n_seeds: int,
    generator: GeneratorConfig | None = None,
    base_seed: int = 0,
    workers: int = 1,
) -> Comparison:
    """Train both configs on identical seeded data for seeds base_seed .. base_seed+n_seeds-1."""
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    generator = generator or GeneratorConfig()
    seeds = list(range(base_seed, base_seed + n_seeds))
    jobs = [(cfg, generator, scenario, s) for s in seeds for cfg in (config_base, config_pns)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, jobs))
    else:
        results = [_run_cell_args(j) for j in jobs]
    return Comparison(scenario, seeds, results[0::2], results[1::2])
