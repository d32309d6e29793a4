"""Workload synthesis and loading.

Everything a simulation consumes is built here: the expected-execution-time
(EET) matrix (synthesized with the coefficient-of-variation-based two-stage
Gamma scheme, or loaded from a CSV file), Poisson arrivals, per-task actual
runtimes sampled around the matrix entries, and deadlines derived from the
matrix means.

All generators are pure functions of their parameters plus an integer seed;
random streams are split per purpose (arrivals, type draws, execution times)
so shrinking or growing ``num_tasks`` never perturbs earlier draws.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

# Task lifecycle states.
PENDING = "pending"        # arrived, waiting in the arriving queue
QUEUED = "queued"          # placed in a machine's local queue
EXECUTING = "executing"    # running on a machine
COMPLETED = "completed"    # finished on time
MISSED = "missed"          # started but terminated at its deadline
CANCELLED = "cancelled"    # discarded before execution started

TERMINAL_STATES = frozenset({COMPLETED, MISSED, CANCELLED})

# Legal lifecycle moves; anything else is a bug in the caller.
_TRANSITIONS = {
    PENDING: {QUEUED, CANCELLED},
    QUEUED: {EXECUTING, CANCELLED},
    EXECUTING: {COMPLETED, MISSED},
}


class EETFileError(ValueError):
    """Raised when an EET file cannot be parsed into a valid matrix."""


class EETMatrix:
    """Expected execution time of each task type on each machine type.

    Entries are strictly positive seconds, indexed (task_type, machine_type).
    Row and grand means are precomputed because deadline assignment and the
    mapping heuristics query them constantly.
    """

    def __init__(self, entries):
        values = np.asarray(entries, dtype=float)
        if values.ndim != 2:
            raise ValueError("EET entries must form a 2-D table")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("EET matrix needs at least one row and one column")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError("EET entries must be strictly positive and finite")
        self.values = values
        self.num_task_types, self.num_machine_types = values.shape
        # Plain-float copies keep the per-pair hot path off numpy scalars.
        self.rows = [[float(x) for x in row] for row in values]
        self.row_means = [sum(row) / len(row) for row in self.rows]
        self.grand_mean = sum(self.row_means) / len(self.row_means)

    def entry(self, task_type: int, machine_type: int) -> float:
        return self.rows[task_type][machine_type]

    def row_mean(self, task_type: int) -> float:
        return self.row_means[task_type]

    def __eq__(self, other):
        return isinstance(other, EETMatrix) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"EETMatrix({self.num_task_types}x{self.num_machine_types})"


@dataclass(frozen=True)
class TaskTypeProfile:
    """Per-type summary: mean runtime over machine types and workload share."""

    type_id: int
    row_mean: float
    share: float


def task_type_profiles(eet: EETMatrix, type_shares=None) -> list[TaskTypeProfile]:
    shares = _normalize_shares(type_shares, eet.num_task_types)
    return [
        TaskTypeProfile(i, eet.row_mean(i), shares[i])
        for i in range(eet.num_task_types)
    ]


@dataclass
class Task:
    """One arriving request and its lifecycle bookkeeping."""

    task_id: int
    type_id: int
    arrival_time: float
    deadline: float
    true_exec_times: tuple[float, ...]
    status: str = PENDING
    # Written by the engine, at most once each.
    machine_id: int | None = None
    start_time: float | None = None
    finish_time: float | None = None

    def __post_init__(self):
        if not self.deadline > self.arrival_time:
            raise ValueError(f"task {self.task_id}: deadline must exceed arrival time")
        if len(self.true_exec_times) < 1 or any(t <= 0 for t in self.true_exec_times):
            raise ValueError(f"task {self.task_id}: true execution times must be positive")

    def advance_status(self, new_status: str) -> None:
        allowed = _TRANSITIONS.get(self.status, frozenset())
        if new_status not in allowed:
            raise ValueError(
                f"task {self.task_id}: illegal status transition "
                f"{self.status!r} -> {new_status!r}"
            )
        self.status = new_status

    def fresh_copy(self) -> "Task":
        """Pristine copy for a new simulation run (paired workload reuse)."""
        return Task(
            task_id=self.task_id,
            type_id=self.type_id,
            arrival_time=self.arrival_time,
            deadline=self.deadline,
            true_exec_times=tuple(self.true_exec_times),
        )


@dataclass
class WorkloadTrace:
    """Time-ordered batch of tasks plus the parameters that produced it."""

    tasks: list[Task]
    arrival_rate: float | None = None
    seed: int | None = None

    def __post_init__(self):
        ids = [t.task_id for t in self.tasks]
        if len(ids) != len(set(ids)):
            raise ValueError("task ids must be unique")
        arrivals = [t.arrival_time for t in self.tasks]
        if any(b < a for a, b in zip(arrivals, arrivals[1:])):
            raise ValueError("tasks must be sorted by non-decreasing arrival time")


def generate_eet_cvb(
    num_task_types: int,
    num_machine_types: int,
    task_cv: float,
    machine_cv: float,
    mean_exec: float,
    seed: int,
) -> EETMatrix:
    """Synthesize an EET matrix with the two-stage Gamma (CVB) scheme.

    Stage one draws a characteristic runtime per task type from
    Gamma(shape=1/task_cv^2, scale=mean_exec*task_cv^2); stage two draws each
    (task, machine) entry from Gamma(shape=1/machine_cv^2,
    scale=row_value*machine_cv^2).  Expected entry value is ``mean_exec``.
    """
    if num_task_types < 1 or num_machine_types < 1:
        raise ValueError("type counts must be at least 1")
    if task_cv <= 0 or machine_cv <= 0:
        raise ValueError("coefficients of variation must be positive")
    if mean_exec <= 0:
        raise ValueError("mean_exec must be positive")
    rng = np.random.default_rng(seed)
    task_shape = 1.0 / task_cv**2
    row_values = rng.gamma(task_shape, mean_exec * task_cv**2, size=num_task_types)
    machine_shape = 1.0 / machine_cv**2
    entries = np.empty((num_task_types, num_machine_types))
    for i, row_value in enumerate(row_values):
        entries[i] = rng.gamma(machine_shape, row_value * machine_cv**2, size=num_machine_types)
    return EETMatrix(entries)


def load_eet(path) -> EETMatrix:
    """Load an EET matrix from a header-free CSV file.

    One row per task type, one column per machine type; blank lines are
    ignored.  Parse failures name the offending data row and column
    (1-based).
    """
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row_no = len(rows) + 1
            values = []
            for col_no, cell in enumerate(line.split(","), start=1):
                cell = cell.strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise EETFileError(
                        f"row {row_no}, column {col_no}: not a number: {cell!r}"
                    ) from None
                if not np.isfinite(value) or value <= 0:
                    raise EETFileError(
                        f"row {row_no}, column {col_no}: entries must be positive, got {value}"
                    )
                values.append(value)
            if rows and len(values) != len(rows[0]):
                raise EETFileError(
                    f"row {row_no}: expected {len(rows[0])} columns, found {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise EETFileError("file holds no numeric rows")
    return EETMatrix(rows)


def save_eet(eet: EETMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in eet.rows:
            fh.write(",".join(repr(v) for v in row) + "\n")


def assign_deadline(eet: EETMatrix, type_id: int, arrival_time: float) -> float:
    """Deadline = arrival + (type's mean runtime) + (grand mean runtime)."""
    if not 0 <= type_id < eet.num_task_types:
        raise ValueError(f"type_id {type_id} out of range")
    return arrival_time + eet.row_mean(type_id) + eet.grand_mean


def generate_workload(
    eet: EETMatrix,
    arrival_rate: float,
    num_tasks: int,
    type_shares=None,
    exec_cv: float = 0.1,
    seed: int = 0,
) -> WorkloadTrace:
    """Generate a Poisson-arrival workload trace.

    Inter-arrival gaps are i.i.d. exponential with mean ``1/arrival_rate``;
    task types follow ``type_shares`` (uniform when omitted); each task's
    actual runtime on machine type j is Gamma-distributed with mean
    ``eet(i, j)`` and coefficient of variation ``exec_cv`` (``exec_cv == 0``
    degenerates to the matrix entry itself).
    """
    if arrival_rate <= 0:
        raise ValueError("arrival_rate must be positive")
    if num_tasks < 1:
        raise ValueError("num_tasks must be at least 1")
    if exec_cv < 0:
        raise ValueError("exec_cv must be non-negative")
    shares = _normalize_shares(type_shares, eet.num_task_types)

    arrival_rng, type_rng, exec_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )
    gaps = arrival_rng.exponential(1.0 / arrival_rate, size=num_tasks)
    arrivals = np.cumsum(gaps)
    types = type_rng.choice(eet.num_task_types, size=num_tasks, p=shares)

    exec_shape = 1.0 / exec_cv**2 if exec_cv > 0 else None
    tasks = []
    for k in range(num_tasks):
        type_id = int(types[k])
        means = eet.values[type_id]
        if exec_shape is None:
            true_times = tuple(float(m) for m in means)
        else:
            draws = exec_rng.gamma(exec_shape, means * exec_cv**2)
            true_times = tuple(float(x) for x in draws)
        arrival = float(arrivals[k])
        tasks.append(
            Task(
                task_id=k,
                type_id=type_id,
                arrival_time=arrival,
                deadline=assign_deadline(eet, type_id, arrival),
                true_exec_times=true_times,
            )
        )
    return WorkloadTrace(tasks=tasks, arrival_rate=arrival_rate, seed=seed)


def save_trace(trace: WorkloadTrace, path) -> None:
    """Write a trace as CSV: task_id, type_id, arrival, deadline, exec per machine type."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for t in trace.tasks:
            writer.writerow(
                [t.task_id, t.type_id, repr(t.arrival_time), repr(t.deadline)]
                + [repr(x) for x in t.true_exec_times]
            )


def load_trace(path) -> WorkloadTrace:
    tasks = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            tasks.append(
                Task(
                    task_id=int(row[0]),
                    type_id=int(row[1]),
                    arrival_time=float(row[2]),
                    deadline=float(row[3]),
                    true_exec_times=tuple(float(x) for x in row[4:]),
                )
            )
    return WorkloadTrace(tasks=tasks)


def trace_digest(trace: WorkloadTrace) -> str:
    """Stable hash of a trace; equal digests mean heuristics saw identical input."""
    h = hashlib.sha256()
    for t in trace.tasks:
        line = ",".join(
            [str(t.task_id), str(t.type_id), repr(t.arrival_time), repr(t.deadline)]
            + [repr(x) for x in t.true_exec_times]
        )
        h.update(line.encode("ascii"))
        h.update(b"\n")
    return h.hexdigest()


def _normalize_shares(type_shares, num_types: int) -> list[float]:
    if type_shares is None:
        return [1.0 / num_types] * num_types
    shares = [float(s) for s in type_shares]
    if len(shares) != num_types:
        raise ValueError(f"expected {num_types} type shares, got {len(shares)}")
    if any(s < 0 for s in shares):
        raise ValueError("type shares must be non-negative")
    if abs(sum(shares) - 1.0) > 1e-9:
        raise ValueError(f"type shares must sum to 1, got {sum(shares)}")
    return shares
