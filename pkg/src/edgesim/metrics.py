"""Post-run and sweep-level analysis.

Pure functions over simulation reports: wasted-energy percentage, the
missed/cancelled breakdown, per-type fairness summaries, Pareto-front
extraction over (energy, miss-rate), replication aggregation with Student-t
confidence intervals, and the CSV results table.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict

from scipy import stats as _scipy_stats


@dataclass
class SimulationReport:
    """Outcome of one simulation run.

    Counter lists are indexed by task type.  ``deferred`` counts deferral
    verdicts (a task deferred at five mapping events contributes five).
    Energy components are in power*seconds.
    """

    heuristic: str
    arrival_rate: float | None
    seed: int | None
    arrived: list[int]
    completed: list[int]
    missed: list[int]
    cancelled: list[int]
    deferred: list[int]
    useful_energy: float
    wasted_energy: float
    idle_energy: float
    initial_energy_budget: float
    end_time: float
    trace_hash: str
    event_log: list | None = None
    fairness_trace: list | None = None

    @property
    def num_task_types(self) -> int:
        return len(self.arrived)

    @property
    def total_arrived(self) -> int:
        return sum(self.arrived)

    @property
    def total_completed(self) -> int:
        return sum(self.completed)

    @property
    def total_missed(self) -> int:
        return sum(self.missed)

    @property
    def total_cancelled(self) -> int:
        return sum(self.cancelled)

    @property
    def total_energy(self) -> float:
        return self.useful_energy + self.wasted_energy + self.idle_energy

    @property
    def collective_completion_rate(self) -> float:
        if self.total_arrived == 0:
            return 0.0
        return self.total_completed / self.total_arrived

    def completion_rates(self) -> list[float | None]:
        """Per-type rate; None for types that never arrived."""
        return [
            (self.completed[i] / self.arrived[i]) if self.arrived[i] > 0 else None
            for i in range(self.num_task_types)
        ]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["collective_completion_rate"] = self.collective_completion_rate
        data["total_energy"] = self.total_energy
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationReport":
        fields = {k: data[k] for k in (
            "heuristic", "arrival_rate", "seed", "arrived", "completed",
            "missed", "cancelled", "deferred", "useful_energy", "wasted_energy",
            "idle_energy", "initial_energy_budget", "end_time", "trace_hash",
        )}
        fields["event_log"] = data.get("event_log")
        fields["fairness_trace"] = data.get("fairness_trace")
        return cls(**fields)


def wasted_energy_pct(report: SimulationReport) -> float:
    """Wasted energy as a percentage of the initial energy budget."""
    if report.initial_energy_budget <= 0:
        raise ValueError("initial energy budget must be positive")
    return 100.0 * report.wasted_energy / report.initial_energy_budget


def unsuccessful_breakdown(report: SimulationReport) -> tuple[float, float]:
    """(missed %, cancelled %) of all arrived tasks."""
    arrived = report.total_arrived
    if arrived == 0:
        return (0.0, 0.0)
    return (
        100.0 * report.total_missed / arrived,
        100.0 * report.total_cancelled / arrived,
    )


@dataclass
class FairnessSummary:
    rates: list[float | None]
    std: float
    min_rate: float
    max_rate: float
    jain_index: float


def fairness_report(report: SimulationReport) -> FairnessSummary:
    """Per-type completion rates plus dispersion statistics.

    Jain index = (sum r)^2 / (n * sum r^2) over defined rates; 1.0 when all
    rates are equal (including the all-zero edge, taken as its limit).
    """
    rates = report.completion_rates()
    defined = [r for r in rates if r is not None]
    if not defined:
        return FairnessSummary(rates, 0.0, 0.0, 0.0, 1.0)
    mean = sum(defined) / len(defined)
    std = (sum((r - mean) ** 2 for r in defined) / len(defined)) ** 0.5
    sum_sq = sum(r * r for r in defined)
    jain = (sum(defined) ** 2 / (len(defined) * sum_sq)) if sum_sq > 0 else 1.0
    return FairnessSummary(rates, std, min(defined), max(defined), jain)


def pareto_front(points) -> list:
    """Non-dominated subset under component-wise minimization.

    A point is dominated when another point is <= in both coordinates and
    strictly < in at least one.  Input order is preserved; duplicates of a
    non-dominated point are all kept.
    """
    pts = list(points)
    n = len(pts)
    if n == 0:
        return []
    order = sorted(range(n), key=lambda i: (pts[i][0], pts[i][1]))
    dominated = [False] * n
    best_prev = math.inf  # smallest second coordinate among strictly-smaller first coords
    i = 0
    while i < n:
        j = i
        while j < n and pts[order[j]][0] == pts[order[i]][0]:
            j += 1
        group = order[i:j]
        group_min = min(pts[k][1] for k in group)
        for k in group:
            if best_prev <= pts[k][1] or pts[k][1] > group_min:
                dominated[k] = True
        best_prev = min(best_prev, group_min)
        i = j
    return [pts[k] for k in range(n) if not dominated[k]]


def mean_confidence_interval(values, confidence: float = 0.95):
    """(mean, half_width) with a Student-t interval; half_width None for n < 2."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("need at least one value")
    n = len(vals)
    mean = sum(vals) / n
    if n < 2:
        return mean, None
    variance = sum((v - mean) ** 2 for v in vals) / (n - 1)
    t = float(_scipy_stats.t.ppf(0.5 + confidence / 2.0, n - 1))
    return mean, t * math.sqrt(variance / n)


# Metrics aggregated per (heuristic, rate) across seeds.
SWEEP_METRICS = (
    "completion_pct",
    "missed_pct",
    "cancelled_pct",
    "unsuccessful_pct",
    "wasted_pct",
    "useful_energy",
    "idle_energy",
    "total_energy",
)


def _point_metrics(report: SimulationReport) -> dict[str, float]:
    missed_pct, cancelled_pct = unsuccessful_breakdown(report)
    return {
        "completion_pct": 100.0 * report.collective_completion_rate,
        "missed_pct": missed_pct,
        "cancelled_pct": cancelled_pct,
        "unsuccessful_pct": missed_pct + cancelled_pct,
        "wasted_pct": wasted_energy_pct(report),
        "useful_energy": report.useful_energy,
        "idle_energy": report.idle_energy,
        "total_energy": report.total_energy,
    }


@dataclass
class SweepPoint:
    """Replication summary for one (heuristic, arrival_rate) cell."""

    heuristic: str
    arrival_rate: float
    replications: int
    metrics: dict = field(default_factory=dict)  # name -> (mean, ci_half or None)

    def mean(self, name: str) -> float:
        return self.metrics[name][0]


def aggregate_sweep(reports, confidence: float = 0.95) -> list[SweepPoint]:
    groups: dict[tuple, list[SimulationReport]] = {}
    for r in reports:
        groups.setdefault((r.heuristic, r.arrival_rate), []).append(r)
    points = []
    for (heuristic, rate), members in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        per_metric = {name: [] for name in SWEEP_METRICS}
        for report in members:
            for name, value in _point_metrics(report).items():
                per_metric[name].append(value)
        metrics = {
            name: mean_confidence_interval(vals, confidence)
            for name, vals in per_metric.items()
        }
        points.append(SweepPoint(heuristic, rate, len(members), metrics))
    return points


def results_table_columns(num_task_types: int) -> list[str]:
    return [
        "heuristic", "rate", "seed",
        "completion_pct", "missed_pct", "cancelled_pct", "wasted_pct",
        "useful_energy", "idle_energy",
    ] + [f"cr_{i}" for i in range(num_task_types)]


def write_results_table(reports, path) -> None:
    """One CSV row per run, sorted by (heuristic, rate, seed)."""
    reports = sorted(reports, key=lambda r: (r.heuristic, r.arrival_rate or 0.0, r.seed or 0))
    if not reports:
        raise ValueError("no reports to write")
    num_types = reports[0].num_task_types
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(results_table_columns(num_types))
        for r in reports:
            m = _point_metrics(r)
            row = [
                r.heuristic, repr(float(r.arrival_rate)), r.seed,
                repr(m["completion_pct"]), repr(m["missed_pct"]),
                repr(m["cancelled_pct"]), repr(m["wasted_pct"]),
                repr(r.useful_energy), repr(r.idle_energy),
            ]
            row += ["" if cr is None else repr(cr) for cr in r.completion_rates()]
            writer.writerow(row)


def sweep_summary(points) -> dict:
    """Nested aggregate view of a sweep, ready for JSON serialization."""
    summary: dict = {}
    for p in points:
        cell = summary.setdefault(p.heuristic, {}).setdefault(f"{p.arrival_rate:g}", {})
        cell["replications"] = p.replications
        for name, (mean, ci) in p.metrics.items():
            cell[name] = {"mean": mean, "ci95_half_width": ci}
    return summary
