"""Shared construction helpers for the test suite."""

import random

from edgesim.simcore import Machine, RunningTask, MachineSpec, Scenario
from edgesim.workload import EETMatrix, Task, WorkloadTrace

import reference_data as ref


def default_eet() -> EETMatrix:
    return EETMatrix(ref.EET_4X4)


def default_scenario(**overrides) -> Scenario:
    eet = overrides.pop("eet", default_eet())
    return Scenario(
        eet=eet,
        machines=[
            MachineSpec(j, ref.DYNAMIC_POWERS[j], ref.IDLE_POWER)
            for j in range(len(ref.DYNAMIC_POWERS))
        ],
        queue_capacity=overrides.pop("queue_capacity", ref.QUEUE_CAPACITY),
        energy_budget=overrides.pop("energy_budget", ref.ENERGY_BUDGET),
    )


def make_task(task_id, type_id=0, arrival=0.0, deadline=10.0, true_exec=None, num_machine_types=4):
    if true_exec is None:
        true_exec = tuple([1.0] * num_machine_types)
    return Task(
        task_id=task_id,
        type_id=type_id,
        arrival_time=arrival,
        deadline=deadline,
        true_exec_times=tuple(true_exec),
    )


def make_machine(eet, machine_id=0, type_id=None, dynamic_power=1.0, idle_power=0.05, capacity=2):
    return Machine(
        machine_id=machine_id,
        type_id=machine_id if type_id is None else type_id,
        dynamic_power=dynamic_power,
        idle_power=idle_power,
        capacity=capacity,
        eet=eet,
    )


def idle_machines(eet, powers=None, capacity=2):
    powers = powers if powers is not None else ref.DYNAMIC_POWERS
    return [
        make_machine(eet, machine_id=j, dynamic_power=powers[j], capacity=capacity)
        for j in range(len(powers))
    ]


def trace_of(tasks, rate=None, seed=None) -> WorkloadTrace:
    return WorkloadTrace(tasks=list(tasks), arrival_rate=rate, seed=seed)


def random_mapping_state(rng: random.Random, eet: EETMatrix):
    """A consistent random snapshot of (arriving queue, machines, now).

    Machines get random capacities, running slots, and partially filled
    queues; the arriving queue holds pending tasks with deadlines around the
    current time so feasible, doomed, and expired cases all occur.
    """
    now = rng.uniform(0.0, 50.0)
    num_machines = rng.randint(2, 5)
    next_id = 0
    machines = []
    for j in range(num_machines):
        m = make_machine(
            eet,
            machine_id=j,
            type_id=rng.randrange(eet.num_machine_types),
            dynamic_power=rng.uniform(0.5, 4.0),
            capacity=rng.randint(1, 3),
        )
        if rng.random() < 0.6:
            run_task = make_task(
                next_id,
                type_id=rng.randrange(eet.num_task_types),
                arrival=max(0.0, now - 5.0),
                deadline=now + rng.uniform(0.5, 8.0),
                num_machine_types=eet.num_machine_types,
            )
            next_id += 1
            start = max(0.0, now - rng.uniform(0.0, 2.0))
            m.running = RunningTask(run_task, start, now + rng.uniform(0.0, 4.0), True)
        for _ in range(rng.randint(0, m.capacity)):
            q_task = make_task(
                next_id,
                type_id=rng.randrange(eet.num_task_types),
                arrival=max(0.0, now - 5.0),
                deadline=now + rng.uniform(0.2, 10.0),
                num_machine_types=eet.num_machine_types,
            )
            next_id += 1
            m.queue.append(q_task)
        machines.append(m)
    arriving = []
    for _ in range(rng.randint(1, 10)):
        arrival = max(0.0, now - rng.uniform(0.0, 6.0))
        # Mix of live, doomed, and already-expired deadlines.
        deadline = now if rng.random() < 0.1 else now + rng.uniform(-2.0, 10.0)
        if deadline <= arrival:
            deadline = arrival + 0.05
        arriving.append(
            make_task(
                next_id,
                type_id=rng.randrange(eet.num_task_types),
                arrival=arrival,
                deadline=deadline,
                num_machine_types=eet.num_machine_types,
            )
        )
        next_id += 1
    return arriving, machines, now


def snapshot_queues(machines):
    return {m.machine_id: list(m.queue) for m in machines}
