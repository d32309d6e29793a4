"""Deterministic discrete-event engine for heterogeneous machines.

World model: tasks land in an unbounded arriving queue; every arrival or
execution-end event triggers a mapping decision that may move tasks into
bounded per-machine FIFO queues, defer them, or drop them.  Machines serve
their queues in order, one task at a time, with no preemption and no
remapping.  A run that would cross its deadline is cut exactly at the
deadline and counted as missed (its dynamic energy is wasted); a task still
waiting at its deadline is cancelled with zero dynamic energy.  Idle power
accrues on every non-busy machine until the last task reaches a terminal
state.

Same-instant events dispatch in a fixed order - completions, then arrivals,
then deadline expiries, then by task id - so runs are bit-reproducible.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .fairness import FairnessState, fairness_trace_row
from .metrics import SimulationReport
from .workload import (
    CANCELLED,
    COMPLETED,
    EETMatrix,
    EXECUTING,
    MISSED,
    PENDING,
    QUEUED,
    Task,
    WorkloadTrace,
    trace_digest,
)

EVENT_COMPLETION = "completion"
EVENT_ARRIVAL = "arrival"
EVENT_EXPIRY = "expiry"
_EVENT_PRIORITY = {EVENT_COMPLETION: 0, EVENT_ARRIVAL: 1, EVENT_EXPIRY: 2}


class ContractViolationError(RuntimeError):
    """A mapping heuristic returned a decision the engine cannot apply."""

    def __init__(self, heuristic: str, time: float, detail: str):
        super().__init__(f"heuristic {heuristic!r} at t={time:.6f}: {detail}")
        self.heuristic = heuristic
        self.time = time


class SimulationInvariantError(AssertionError):
    """Internal engine invariant broken; only raised in assertion mode."""


class EventQueue:
    """Future events ordered by (time, kind priority, task_id)."""

    def __init__(self):
        self._heap: list[tuple] = []

    def push(self, time: float, kind: str, task_id: int) -> None:
        heapq.heappush(self._heap, (time, _EVENT_PRIORITY[kind], task_id, kind))

    def pop(self) -> tuple[float, str, int]:
        time, _, task_id, kind = heapq.heappop(self._heap)
        return time, kind, task_id

    def __len__(self):
        return len(self._heap)

    def __bool__(self):
        return bool(self._heap)


@dataclass(frozen=True)
class MachineSpec:
    """Static description of one machine in a scenario."""

    type_id: int
    dynamic_power: float
    idle_power: float


@dataclass
class Scenario:
    """Machines plus the shared EET matrix, queue bound, and energy budget."""

    eet: EETMatrix
    machines: list[MachineSpec]
    queue_capacity: int = 2
    energy_budget: float = 5000.0

    def __post_init__(self):
        if not self.machines:
            raise ValueError("scenario needs at least one machine")
        if self.queue_capacity < 1:
            raise ValueError("queue capacity must be at least 1")
        if self.energy_budget <= 0:
            raise ValueError("energy budget must be positive")
        for i, spec in enumerate(self.machines):
            if not 0 <= spec.type_id < self.eet.num_machine_types:
                raise ValueError(f"machine {i}: type_id {spec.type_id} outside EET columns")
            if spec.dynamic_power <= 0:
                raise ValueError(f"machine {i}: dynamic power must be positive")
            if spec.idle_power < 0:
                raise ValueError(f"machine {i}: idle power must be non-negative")


@dataclass
class RunningTask:
    """The task currently on a machine and its pre-computed termination."""

    task: Task
    start_time: float
    planned_finish: float
    on_time: bool


class Machine:
    """One machine: bounded FIFO local queue, one running slot, energy ledger."""

    def __init__(self, machine_id, type_id, dynamic_power, idle_power, capacity, eet):
        self.machine_id = machine_id
        self.type_id = type_id
        self.dynamic_power = dynamic_power
        self.idle_power = idle_power
        self.capacity = capacity
        self.eet = eet
        self.queue: list[Task] = []
        self.running: RunningTask | None = None
        self.useful_energy = 0.0
        self.wasted_energy = 0.0
        self.idle_energy = 0.0

    @property
    def vacancies(self) -> int:
        return self.capacity - len(self.queue)

    def __repr__(self):
        return f"Machine(id={self.machine_id}, type={self.type_id})"


@dataclass
class MappingDecision:
    """Verdicts of one mapping event: assign, defer, or drop.

    The three id lists are disjoint.  Assignments reference machines that had
    queue vacancy when the decision was made (after its own drops are
    applied); drops may name tasks in the arriving queue or already queued on
    a machine.
    """

    assignments: list[tuple[int, int]] = field(default_factory=list)
    deferrals: list[int] = field(default_factory=list)
    drops: list[int] = field(default_factory=list)


def completion_given_start(start: float, exec_time: float, deadline: float) -> tuple[float, bool]:
    """Expected completion for a run beginning at ``start``.

    Three disjoint cases: a finish strictly before the deadline is feasible;
    a run that would cross the deadline is cut there (completion = deadline,
    infeasible); a start at or past the deadline makes no progress
    (completion = start, infeasible).  Finishing exactly at the deadline
    counts as infeasible.
    """
    finish = start + exec_time
    if finish < deadline:
        return finish, True
    if start < deadline:
        return deadline, False
    return start, False


def energy_given_start(start: float, exec_time: float, deadline: float, dynamic_power: float) -> float:
    """Expected dynamic energy for a run beginning at ``start``.

    Mirrors the completion cases: a feasible run costs power * exec_time, a
    doomed run burns power until the deadline cut, and a run that never
    starts costs nothing.
    """
    finish = start + exec_time
    if finish < deadline:
        return dynamic_power * exec_time
    if start < deadline:
        return dynamic_power * (deadline - start)
    return 0.0


def backlog_start_time(machine: Machine, queue, now: float) -> float:
    """Start time of the next free slot given an explicit queue snapshot.

    Rolls the clock over the running task's planned finish and then over each
    queued predecessor's expected runtime, truncating every predecessor at
    its own deadline (a predecessor whose start already passed its deadline
    occupies no machine time).
    """
    t = now
    running = machine.running
    if running is not None and running.planned_finish > t:
        t = running.planned_finish
    rows = machine.eet.rows
    machine_type = machine.type_id
    for queued in queue:
        finish = t + rows[queued.type_id][machine_type]
        if finish < queued.deadline:
            t = finish
        elif t < queued.deadline:
            t = queued.deadline
    return t


def expected_start_time(machine: Machine, now: float) -> float:
    """Time the next slot of the machine's queue would begin service."""
    return backlog_start_time(machine, machine.queue, now)


def expected_completion_time(task: Task, machine: Machine, now: float) -> tuple[float, bool]:
    """(expected completion, feasible) for appending ``task`` to the machine."""
    start = expected_start_time(machine, now)
    exec_time = machine.eet.entry(task.type_id, machine.type_id)
    return completion_given_start(start, exec_time, task.deadline)


def expected_energy_consumption(task: Task, machine: Machine, now: float) -> float:
    """Expected dynamic energy for appending ``task`` to the machine."""
    start = expected_start_time(machine, now)
    exec_time = machine.eet.entry(task.type_id, machine.type_id)
    return energy_given_start(start, exec_time, task.deadline, machine.dynamic_power)


class SimulationState:
    """Mutable state of one run: clock, queues, machines, counters, ledgers."""

    def __init__(
        self,
        scenario: Scenario,
        workload: WorkloadTrace,
        *,
        fairness_window: float | None = None,
        fairness_factor: float = 1.0,
        check_invariants: bool = False,
        collect_event_log: bool = False,
        collect_fairness_trace: bool = False,
    ):
        self.scenario = scenario
        self.eet = scenario.eet
        self.machines = [
            Machine(i, s.type_id, s.dynamic_power, s.idle_power, scenario.queue_capacity, scenario.eet)
            for i, s in enumerate(scenario.machines)
        ]
        num_types = scenario.eet.num_task_types
        num_machine_types = scenario.eet.num_machine_types
        # Each run works on pristine copies so a trace can be replayed
        # unchanged under every heuristic (paired comparisons).
        self.tasks = [t.fresh_copy() for t in workload.tasks]
        for t in self.tasks:
            if not 0 <= t.type_id < num_types:
                raise ValueError(f"task {t.task_id}: type_id {t.type_id} outside EET rows")
            if len(t.true_exec_times) != num_machine_types:
                raise ValueError(
                    f"task {t.task_id}: expected {num_machine_types} true execution times"
                )
        self.tasks_by_id = {t.task_id: t for t in self.tasks}
        self.arriving: list[Task] = []
        self.events = EventQueue()
        self.now = 0.0
        self.stats = {
            name: [0] * num_types
            for name in ("arrived", "completed", "missed", "cancelled", "deferred")
        }
        self.fairness = FairnessState(num_types, window=fairness_window)
        self.fairness_factor = fairness_factor
        self.check_invariants = check_invariants
        self.event_log: list | None = [] if collect_event_log else None
        self.fairness_rows: list | None = [] if collect_fairness_trace else None
        self.terminal_count = 0
        self.end_time = 0.0
        # FIFO bookkeeping: enqueue sequence per task, last started per machine.
        self._enqueue_counter = 0
        self._enqueue_seq: dict[int, int] = {}
        self._last_started_seq = [-1] * len(self.machines)

    # -- clock and energy ---------------------------------------------------

    def account_idle_energy(self, until: float) -> None:
        """Accrue idle power on non-busy machines over [now, until], advance clock."""
        dt = until - self.now
        if dt > 0:
            for m in self.machines:
                if m.running is None:
                    m.idle_energy += m.idle_power * dt
        self.now = until

    # -- event handlers -----------------------------------------------------

    def _log(self, kind: str, task: Task, machine_id, detail: str) -> None:
        if self.event_log is not None:
            self.event_log.append((self.now, kind, task.task_id, machine_id, detail))

    def _on_arrival(self, task: Task) -> None:
        self.arriving.append(task)
        self.stats["arrived"][task.type_id] += 1
        self.fairness.update("arrival", task.type_id, self.now)
        self._log("arrival", task, "", f"type={task.type_id}")

    def _on_completion(self, task: Task) -> None:
        machine = self.machines[task.machine_id]
        run = machine.running
        if run is None or run.task is not task:
            raise SimulationInvariantError(
                f"completion event for task {task.task_id} but machine "
                f"{machine.machine_id} is running something else"
            )
        machine.running = None
        task.finish_time = self.now
        if run.on_time:
            energy = machine.dynamic_power * task.true_exec_times[machine.type_id]
            machine.useful_energy += energy
            task.advance_status(COMPLETED)
            self.stats["completed"][task.type_id] += 1
            self.fairness.update("completed", task.type_id, self.now)
            if self.check_invariants and task.finish_time > task.deadline:
                raise SimulationInvariantError(
                    f"task {task.task_id} completed after its deadline"
                )
            self._log("completed", task, machine.machine_id,
                      f"type={task.type_id};energy={energy!r}")
        else:
            # Terminated exactly at the deadline; the burned time is wasted.
            energy = machine.dynamic_power * (task.deadline - run.start_time)
            machine.wasted_energy += energy
            task.advance_status(MISSED)
            self.stats["missed"][task.type_id] += 1
            self.fairness.update("missed", task.type_id, self.now)
            self._log("missed", task, machine.machine_id,
                      f"type={task.type_id};energy={energy!r}")
        self.terminal_count += 1
        self.end_time = self.now
        if machine.queue:
            self._begin_execution(machine, machine.queue.pop(0))

    def _on_expiry(self, task: Task) -> None:
        # Lazy cancellation: only tasks still waiting somewhere are affected.
        if task.status in (PENDING, QUEUED):
            self._cancel(task, reason="expired")

    def _cancel(self, task: Task, reason: str) -> None:
        if task.status == PENDING:
            self.arriving.remove(task)
            machine_field = ""
        else:
            machine = self.machines[task.machine_id]
            machine.queue.remove(task)
            self._enqueue_seq.pop(task.task_id, None)
            machine_field = machine.machine_id
        task.advance_status(CANCELLED)
        task.finish_time = self.now
        self.stats["cancelled"][task.type_id] += 1
        self.fairness.update("cancelled", task.type_id, self.now)
        self.terminal_count += 1
        self.end_time = self.now
        self._log("cancelled", task, machine_field, f"type={task.type_id};reason={reason}")

    def _begin_execution(self, machine: Machine, task: Task) -> None:
        if self.check_invariants:
            seq = self._enqueue_seq.get(task.task_id, -1)
            if seq <= self._last_started_seq[machine.machine_id]:
                raise SimulationInvariantError(
                    f"machine {machine.machine_id} started task {task.task_id} out of FIFO order"
                )
            self._last_started_seq[machine.machine_id] = seq
        self._enqueue_seq.pop(task.task_id, None)
        task.advance_status(EXECUTING)
        task.start_time = self.now
        true_exec = task.true_exec_times[machine.type_id]
        on_time = self.now + true_exec <= task.deadline
        planned = self.now + true_exec if on_time else task.deadline
        machine.running = RunningTask(task, self.now, planned, on_time)
        self.events.push(planned, EVENT_COMPLETION, task.task_id)
        self._log("start", task, machine.machine_id, f"type={task.type_id}")

    # -- mapping ------------------------------------------------------------

    def _mapping_event(self, mapper, heuristic_name: str) -> None:
        if not self.arriving:
            return
        if self.fairness_rows is not None:
            self.fairness_rows.append(
                fairness_trace_row(self.now, self.eet.num_task_types,
                                   self.fairness.rates(), self.fairness_factor)
            )
        decision = mapper(self.arriving, self.machines, self.eet, self.now, self.fairness)
        self._apply_decision(decision, heuristic_name)

    def _apply_decision(self, decision: MappingDecision, heuristic_name: str) -> None:
        assigned_ids = [task_id for task_id, _ in decision.assignments]
        all_ids = assigned_ids + list(decision.drops) + list(decision.deferrals)
        if len(all_ids) != len(set(all_ids)):
            raise ContractViolationError(
                heuristic_name, self.now, "assignment/deferral/drop lists overlap"
            )
        # Drops first: felare frees queue slots and fills them in the same event.
        for task_id in decision.drops:
            task = self.tasks_by_id.get(task_id)
            if task is None or task.status not in (PENDING, QUEUED):
                raise ContractViolationError(
                    heuristic_name, self.now, f"drop of task {task_id} which is not droppable"
                )
            self._cancel(task, reason="dropped")
        for task_id, machine_id in decision.assignments:
            task = self.tasks_by_id.get(task_id)
            if task is None or task.status != PENDING or task not in self.arriving:
                raise ContractViolationError(
                    heuristic_name, self.now, f"assignment of task {task_id} not in arriving queue"
                )
            if not 0 <= machine_id < len(self.machines):
                raise ContractViolationError(
                    heuristic_name, self.now, f"assignment to unknown machine {machine_id}"
                )
            machine = self.machines[machine_id]
            if len(machine.queue) >= machine.capacity:
                raise ContractViolationError(
                    heuristic_name, self.now, f"assignment to full queue on machine {machine_id}"
                )
            if task.machine_id is not None:
                raise ContractViolationError(
                    heuristic_name, self.now, f"task {task_id} was already mapped once"
                )
            self.arriving.remove(task)
            task.machine_id = machine_id
            task.advance_status(QUEUED)
            machine.queue.append(task)
            self._enqueue_counter += 1
            self._enqueue_seq[task.task_id] = self._enqueue_counter
            self._log("assigned", task, machine_id, f"type={task.type_id}")
        for task_id in decision.deferrals:
            task = self.tasks_by_id.get(task_id)
            if task is None or task.status != PENDING:
                raise ContractViolationError(
                    heuristic_name, self.now, f"deferral of task {task_id} not in arriving queue"
                )
            self.stats["deferred"][task.type_id] += 1
        # Idle machines pull their queue head immediately.
        for machine in self.machines:
            if machine.running is None and machine.queue:
                self._begin_execution(machine, machine.queue.pop(0))

    # -- invariants ---------------------------------------------------------

    def _check_event_invariants(self) -> None:
        in_flight = (
            len(self.arriving)
            + sum(len(m.queue) for m in self.machines)
            + sum(1 for m in self.machines if m.running is not None)
        )
        if sum(self.stats["arrived"]) - self.terminal_count != in_flight:
            raise SimulationInvariantError("task conservation broken")
        for m in self.machines:
            if len(m.queue) > m.capacity:
                raise SimulationInvariantError(f"machine {m.machine_id} queue over capacity")

    def _verify_final(self) -> None:
        for task in self.tasks:
            if task.status not in (COMPLETED, MISSED, CANCELLED):
                raise SimulationInvariantError(f"task {task.task_id} never reached a terminal state")
        useful = {m.machine_id: 0.0 for m in self.machines}
        wasted = {m.machine_id: 0.0 for m in self.machines}
        for task in self.tasks:
            if task.status == COMPLETED:
                machine = self.machines[task.machine_id]
                useful[machine.machine_id] += machine.dynamic_power * task.true_exec_times[machine.type_id]
            elif task.status == MISSED:
                machine = self.machines[task.machine_id]
                wasted[machine.machine_id] += machine.dynamic_power * (task.deadline - task.start_time)
        for m in self.machines:
            if abs(m.useful_energy - useful[m.machine_id]) > 1e-9 * max(1.0, m.useful_energy):
                raise SimulationInvariantError(f"useful-energy ledger mismatch on machine {m.machine_id}")
            if abs(m.wasted_energy - wasted[m.machine_id]) > 1e-9 * max(1.0, m.wasted_energy):
                raise SimulationInvariantError(f"wasted-energy ledger mismatch on machine {m.machine_id}")

    # -- reporting ----------------------------------------------------------

    def build_report(self, heuristic_name: str, workload: WorkloadTrace) -> SimulationReport:
        return SimulationReport(
            heuristic=heuristic_name,
            arrival_rate=workload.arrival_rate,
            seed=workload.seed,
            arrived=list(self.stats["arrived"]),
            completed=list(self.stats["completed"]),
            missed=list(self.stats["missed"]),
            cancelled=list(self.stats["cancelled"]),
            deferred=list(self.stats["deferred"]),
            useful_energy=sum(m.useful_energy for m in self.machines),
            wasted_energy=sum(m.wasted_energy for m in self.machines),
            idle_energy=sum(m.idle_energy for m in self.machines),
            initial_energy_budget=self.scenario.energy_budget,
            end_time=self.end_time,
            trace_hash=trace_digest(workload),
            event_log=self.event_log,
            fairness_trace=self.fairness_rows,
        )


def _resolve_heuristic(heuristic, params):
    if callable(heuristic):
        if params:
            raise ValueError("params apply to named heuristics; bind them into the callable")
        return heuristic, getattr(heuristic, "__name__", "custom")
    from . import heuristics as _heuristics  # deferred; heuristics imports this module

    name = str(heuristic)
    return _heuristics.get_mapper(name, **(params or {})), name


def run_simulation(
    scenario: Scenario,
    workload: WorkloadTrace,
    heuristic,
    params: dict | None = None,
    *,
    collect_event_log: bool = False,
    collect_fairness_trace: bool = False,
    fairness_window: float | None = None,
    check_invariants: bool = False,
) -> SimulationReport:
    """Run one simulation to completion and return its report.

    ``heuristic`` is a registered name (mm, msd, mmu, elare, felare) or a
    callable ``mapper(arriving_queue, machines, eet, now, fairness_state) ->
    MappingDecision``.  The mapper runs after every arrival and every
    execution-end event, sees the whole arriving queue, and may fill at most
    the vacant queue slots.  The run ends when the last task reaches a
    terminal state; idle energy is accounted up to that instant.
    """
    mapper, name = _resolve_heuristic(heuristic, params)
    state = SimulationState(
        scenario,
        workload,
        fairness_window=fairness_window,
        fairness_factor=(params or {}).get("f", 1.0),
        check_invariants=check_invariants,
        collect_event_log=collect_event_log,
        collect_fairness_trace=collect_fairness_trace,
    )
    for task in state.tasks:
        state.events.push(task.arrival_time, EVENT_ARRIVAL, task.task_id)
        state.events.push(task.deadline, EVENT_EXPIRY, task.task_id)
    total = len(state.tasks)
    while state.events and state.terminal_count < total:
        time, kind, task_id = state.events.pop()
        state.account_idle_energy(time)
        task = state.tasks_by_id[task_id]
        if kind == EVENT_COMPLETION:
            state._on_completion(task)
            if state.terminal_count < total:
                state._mapping_event(mapper, name)
        elif kind == EVENT_ARRIVAL:
            state._on_arrival(task)
            state._mapping_event(mapper, name)
        else:
            state._on_expiry(task)
        if state.check_invariants:
            state._check_event_invariants()
    if state.check_invariants:
        state._verify_final()
    return state.build_report(name, workload)
