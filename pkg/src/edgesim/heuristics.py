"""The five mapping heuristics behind one mapper interface.

mm, msd, and mmu are two-phase minimum-completion-time baselines: phase one
matches every queued task with the machine that would finish it soonest;
phase two lets each machine with a vacancy take one nominee, picked by
fastest completion (mm), soonest deadline (msd), or highest urgency (mmu).
Baselines never drop; unmapped tasks wait for the next event.

elare nominates each task to its cheapest *feasible* machine (phase one) and
each machine takes its cheapest nominee (phase two).  A task feasible
nowhere is deferred while its deadline still lies ahead and dropped once the
deadline passed.

felare extends elare: task types whose completion rate has fallen below the
fairness limit get first claim on vacancies, and a still-infeasible suffered
task may evict queued non-suffered work from its best-matching machine, one
victim at a time, until it fits.

All mappers are pure functions of (queue, machine states, now, parameters):
they never mutate machines or tasks and return the same decision for the
same state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fairness import suffered_task_types
from .simcore import (
    MappingDecision,
    backlog_start_time,
    completion_given_start,
)
from .workload import EETMatrix

HEURISTIC_NAMES = ("mm", "msd", "mmu", "elare", "felare")


@dataclass(frozen=True)
class CandidatePair:
    """One (task, machine) nomination produced by a phase-one scan."""

    task_id: int
    machine_id: int
    expected_completion: float
    expected_energy: float | None
    feasible: bool
    urgency: float | None
    deadline: float


def _queue_view(machines) -> dict[int, list]:
    return {m.machine_id: m.queue for m in machines}


def _machine_starts(machines, now, queues) -> dict[int, float]:
    return {m.machine_id: backlog_start_time(m, queues[m.machine_id], now) for m in machines}


def _completion_phase1(queue, machines, now, queues) -> list[CandidatePair]:
    """Per task, the machine with the minimum expected completion time.

    The deadline-truncated completion value plateaus at the deadline for
    every machine the task would miss on, so the raw (untruncated) finish
    breaks those ties: among equally hopeless options, the machine that
    would actually finish the work soonest wins.
    """
    starts = _machine_starts(machines, now, queues)
    pairs = []
    for task in queue:
        best_key = (math.inf, math.inf)
        best_completion = math.inf
        best_machine = None
        best_exec = 0.0
        best_feasible = False
        for m in machines:
            exec_time = m.eet.rows[task.type_id][m.type_id]
            completion, feasible = completion_given_start(
                starts[m.machine_id], exec_time, task.deadline
            )
            key = (completion, starts[m.machine_id] + exec_time)
            if key < best_key:
                best_key = key
                best_completion = completion
                best_machine = m
                best_exec = exec_time
                best_feasible = feasible
        slack = task.deadline - best_exec
        pairs.append(
            CandidatePair(
                task_id=task.task_id,
                machine_id=best_machine.machine_id,
                expected_completion=best_completion,
                expected_energy=None,
                feasible=best_feasible,
                urgency=1.0 / slack if slack > 0 else None,
                deadline=task.deadline,
            )
        )
    return pairs


def _energy_phase1(queue, machines, eet, now, queues):
    """Per task, the cheapest feasible machine; tasks feasible nowhere are split off."""
    starts = _machine_starts(machines, now, queues)
    pairs = []
    infeasible = []
    for task in queue:
        row = eet.rows[task.type_id]
        best_energy = math.inf
        best = None
        for m in machines:
            exec_time = row[m.type_id]
            completion, feasible = completion_given_start(
                starts[m.machine_id], exec_time, task.deadline
            )
            if not feasible:
                continue
            energy = m.dynamic_power * exec_time
            if energy < best_energy:
                best_energy = energy
                best = (m, completion, exec_time)
        if best is None:
            infeasible.append(task)
            continue
        machine, completion, exec_time = best
        slack = task.deadline - exec_time
        pairs.append(
            CandidatePair(
                task_id=task.task_id,
                machine_id=machine.machine_id,
                expected_completion=completion,
                expected_energy=best_energy,
                feasible=True,
                urgency=1.0 / slack if slack > 0 else None,
                deadline=task.deadline,
            )
        )
    return pairs, infeasible


def _phase2_select(pairs, machines, queues, key) -> list[CandidatePair]:
    """Each machine with a vacancy takes its best nominee under ``key``."""
    by_machine: dict[int, list[CandidatePair]] = {}
    for p in pairs:
        by_machine.setdefault(p.machine_id, []).append(p)
    chosen = []
    for m in machines:
        if len(queues[m.machine_id]) >= m.capacity:
            continue
        nominees = by_machine.get(m.machine_id)
        if nominees:
            chosen.append(min(nominees, key=key))
    return chosen


# Phase-two selection keys; ties fall through to soonest deadline, then task id.
def _key_completion(p: CandidatePair):
    return (p.expected_completion, p.deadline, p.task_id)


def _key_deadline(p: CandidatePair):
    return (p.deadline, p.expected_completion, p.task_id)


def _key_urgency(p: CandidatePair):
    # Zero or negative slack means infinitely urgent; those rank first, by id.
    if p.urgency is None:
        return (0, 0.0, 0.0, p.task_id)
    return (1, -p.urgency, p.deadline, p.task_id)


def _key_energy(p: CandidatePair):
    return (p.expected_energy, p.deadline, p.task_id)


def _completion_family(arriving_queue, machines, now, key) -> MappingDecision:
    queues = _queue_view(machines)
    pairs = _completion_phase1(arriving_queue, machines, now, queues)
    chosen = _phase2_select(pairs, machines, queues, key)
    assigned = {p.task_id for p in chosen}
    return MappingDecision(
        assignments=[(p.task_id, p.machine_id) for p in chosen],
        deferrals=[t.task_id for t in arriving_queue if t.task_id not in assigned],
        drops=[],
    )


def map_mm(arriving_queue, machines, now) -> MappingDecision:
    """Minimum completion time in both phases."""
    return _completion_family(arriving_queue, machines, now, _key_completion)


def map_msd(arriving_queue, machines, now) -> MappingDecision:
    """Minimum completion time, then soonest deadline per machine."""
    return _completion_family(arriving_queue, machines, now, _key_deadline)


def map_mmu(arriving_queue, machines, now) -> MappingDecision:
    """Minimum completion time, then maximum urgency per machine.

    Urgency of a task on its nominated machine is 1 / (deadline - expected
    runtime); non-positive slack counts as infinitely urgent.
    """
    return _completion_family(arriving_queue, machines, now, _key_urgency)


def elare_phase1(arriving_queue, machines, eet: EETMatrix, now: float):
    """(feasible efficient pairs, infeasible tasks) for the current state."""
    return _energy_phase1(arriving_queue, machines, eet, now, _queue_view(machines))


def elare_phase2(feasible_efficient_pairs, machines) -> list[tuple[int, int]]:
    """Assignments: each vacant machine takes its cheapest nominee."""
    chosen = _phase2_select(feasible_efficient_pairs, machines, _queue_view(machines), _key_energy)
    return [(p.task_id, p.machine_id) for p in chosen]


def map_elare(arriving_queue, machines, eet: EETMatrix, now: float) -> MappingDecision:
    """Energy- and deadline-aware two-phase mapping."""
    queues = _queue_view(machines)
    pairs, infeasible = _energy_phase1(arriving_queue, machines, eet, now, queues)
    chosen = _phase2_select(pairs, machines, queues, _key_energy)
    assigned = {p.task_id for p in chosen}
    drops = [t.task_id for t in infeasible if t.deadline <= now]
    dropped = set(drops)
    return MappingDecision(
        assignments=[(p.task_id, p.machine_id) for p in chosen],
        deferrals=[
            t.task_id
            for t in arriving_queue
            if t.task_id not in assigned and t.task_id not in dropped
        ],
        drops=drops,
    )


def map_felare(
    arriving_queue,
    machines,
    eet: EETMatrix,
    now: float,
    fairness_state=None,
    f: float = 1.0,
) -> MappingDecision:
    """elare with priority for suffered task types.

    With no suffered types the decision is exactly ``map_elare``.  Otherwise
    suffered tasks claim vacancies first; each still-infeasible suffered task
    then targets the machine with its smallest expected runtime among those
    queueing non-suffered work, evicting the most recently queued non-suffered
    task repeatedly until the suffered task fits (evictions stand even when
    they turn out not to suffice).  Remaining vacancies are filled with
    non-suffered tasks by the ordinary energy-aware pass over the updated
    queue picture.
    """
    if f < 0:
        raise ValueError("fairness factor must be non-negative")
    suffered = suffered_task_types(fairness_state, f)
    if not suffered:
        return map_elare(arriving_queue, machines, eet, now)

    shadow = {m.machine_id: list(m.queue) for m in machines}
    tasks_by_id = {t.task_id: t for t in arriving_queue}
    assignments: list[tuple[int, int]] = []
    drops: list[int] = []
    assigned: set[int] = set()

    pairs, infeasible = _energy_phase1(arriving_queue, machines, eet, now, shadow)
    high_priority = [p for p in pairs if tasks_by_id[p.task_id].type_id in suffered]
    for p in _phase2_select(high_priority, machines, shadow, _key_energy):
        assignments.append((p.task_id, p.machine_id))
        assigned.add(p.task_id)
        shadow[p.machine_id].append(tasks_by_id[p.task_id])

    for task in infeasible:
        if task.type_id not in suffered:
            continue
        candidates = [
            m for m in machines
            if any(q.type_id not in suffered for q in shadow[m.machine_id])
        ]
        if not candidates:
            continue
        target = min(
            candidates, key=lambda m: (eet.rows[task.type_id][m.type_id], m.machine_id)
        )
        queue = shadow[target.machine_id]
        exec_time = eet.rows[task.type_id][target.type_id]
        while True:
            start = backlog_start_time(target, queue, now)
            _, feasible = completion_given_start(start, exec_time, task.deadline)
            if feasible and len(queue) < target.capacity:
                assignments.append((task.task_id, target.machine_id))
                assigned.add(task.task_id)
                queue.append(task)
                break
            victim_idx = next(
                (i for i in range(len(queue) - 1, -1, -1) if queue[i].type_id not in suffered),
                None,
            )
            if victim_idx is None:
                break
            drops.append(queue.pop(victim_idx).task_id)

    remainder = [
        t for t in arriving_queue
        if t.task_id not in assigned and t.type_id not in suffered
    ]
    pairs2, _ = _energy_phase1(remainder, machines, eet, now, shadow)
    for p in _phase2_select(pairs2, machines, shadow, _key_energy):
        assignments.append((p.task_id, p.machine_id))
        assigned.add(p.task_id)
        shadow[p.machine_id].append(tasks_by_id[p.task_id])

    dropped = set(drops)
    for t in arriving_queue:
        if t.task_id not in assigned and t.deadline <= now:
            drops.append(t.task_id)
            dropped.add(t.task_id)
    deferrals = [
        t.task_id
        for t in arriving_queue
        if t.task_id not in assigned and t.task_id not in dropped
    ]
    return MappingDecision(assignments=assignments, deferrals=deferrals, drops=drops)


def get_mapper(name: str, **params):
    """Engine-facing callable for a heuristic name.

    The returned mapper has the uniform signature
    ``mapper(arriving_queue, machines, eet, now, fairness_state)``.
    Only felare takes a parameter: the fairness factor ``f`` (default 1.0).
    """
    if name not in HEURISTIC_NAMES:
        raise ValueError(f"unknown heuristic {name!r}; choose from {', '.join(HEURISTIC_NAMES)}")
    if name == "felare":
        f = params.pop("f", 1.0)
        if f < 0:
            raise ValueError("fairness factor must be non-negative")
    if params:
        raise ValueError(f"unknown parameters for {name!r}: {sorted(params)}")
    if name == "mm":
        return lambda queue, machines, eet, now, fairness: map_mm(queue, machines, now)
    if name == "msd":
        return lambda queue, machines, eet, now, fairness: map_msd(queue, machines, now)
    if name == "mmu":
        return lambda queue, machines, eet, now, fairness: map_mmu(queue, machines, now)
    if name == "elare":
        return lambda queue, machines, eet, now, fairness: map_elare(queue, machines, eet, now)
    return lambda queue, machines, eet, now, fairness: map_felare(queue, machines, eet, now, fairness, f)
