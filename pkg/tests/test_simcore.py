"""Engine semantics: event ordering, the completion/energy cases, queue
service, deadline handling, energy ledgers, and run-level invariants."""

import random

import pytest

from edgesim.simcore import (
    ContractViolationError,
    EventQueue,
    MachineSpec,
    MappingDecision,
    RunningTask,
    Scenario,
    SimulationState,
    expected_completion_time,
    expected_energy_consumption,
    expected_start_time,
    run_simulation,
)
from edgesim.workload import EETMatrix

from helpers import default_scenario, make_machine, make_task, trace_of


def oracle_cases(start, exec_time, deadline, power):
    """Independently coded three-case oracle for completion and energy.

    Evaluates the three case predicates explicitly and checks they are
    mutually exclusive and exhaustive before picking a value.
    """
    finish = start + exec_time
    on_time = finish < deadline
    cut_midway = finish >= deadline and start < deadline
    dead_on_arrival = start >= deadline
    assert on_time + cut_midway + dead_on_arrival == 1
    if on_time:
        return finish, True, power * exec_time
    if cut_midway:
        return deadline, False, power * (deadline - start)
    return start, False, 0.0


def pair_machine(exec_time, power=1.0, now=0.0):
    """Idle single-machine fixture whose next start time equals ``now``."""
    eet = EETMatrix([[exec_time]])
    return make_machine(eet, machine_id=0, type_id=0, dynamic_power=power)


class TestEventQueue:
    def test_orders_by_time_then_kind_then_id(self):
        q = EventQueue()
        q.push(5.0, "expiry", 1)
        q.push(5.0, "arrival", 9)
        q.push(5.0, "completion", 4)
        q.push(5.0, "arrival", 2)
        q.push(3.0, "expiry", 7)
        popped = [q.pop() for _ in range(len(q))]
        assert popped == [
            (3.0, "expiry", 7),
            (5.0, "completion", 4),
            (5.0, "arrival", 2),
            (5.0, "arrival", 9),
            (5.0, "expiry", 1),
        ]


class TestCompletionAndEnergyCases:
    def test_feasible_case_with_default_entry(self):
        machine = pair_machine(2.238)
        task = make_task(0, deadline=4.566, num_machine_types=1)
        assert expected_completion_time(task, machine, 0.0) == (2.238, True)

    def test_midway_cut_returns_deadline(self):
        machine = pair_machine(2.238)
        task = make_task(0, deadline=4.566, num_machine_types=1)
        completion, feasible = expected_completion_time(task, machine, 4.0)
        assert (completion, feasible) == (4.566, False)

    def test_start_past_deadline_returns_start(self):
        machine = pair_machine(123.0)
        task = make_task(0, deadline=4.566, num_machine_types=1)
        assert expected_completion_time(task, machine, 5.0) == (5.0, False)

    def test_boundary_exact_finish_is_infeasible(self):
        machine = pair_machine(2.0)
        task = make_task(0, deadline=2.0, arrival=-1.0, num_machine_types=1)
        assert expected_completion_time(task, machine, 0.0) == (2.0, False)

    def test_feasible_energy_value(self):
        machine = pair_machine(2.238, power=1.6)
        task = make_task(0, deadline=4.566, num_machine_types=1)
        assert expected_energy_consumption(task, machine, 0.0) == pytest.approx(3.5808, abs=1e-12)

    def test_midway_energy_value(self):
        machine = pair_machine(2.238, power=3.0)
        task = make_task(0, deadline=4.566, num_machine_types=1)
        assert expected_energy_consumption(task, machine, 4.0) == pytest.approx(
            3.0 * 0.566, abs=1e-9
        )

    def test_dead_on_arrival_energy_zero(self):
        machine = pair_machine(2.238, power=3.0)
        task = make_task(0, deadline=4.566, num_machine_types=1)
        assert expected_energy_consumption(task, machine, 9.0) == 0.0

    def test_random_tuples_match_oracle(self):
        rng = random.Random(11)
        for i in range(2000):
            start = rng.uniform(0.0, 10.0)
            exec_time = rng.uniform(0.01, 5.0)
            deadline = rng.uniform(0.5, 12.0)
            power = rng.uniform(0.1, 4.0)
            if i % 10 == 0:
                deadline = start + exec_time  # exact-boundary case
            if i % 17 == 0:
                deadline = start  # start-at-deadline case
            if deadline <= 0:
                continue
            machine = pair_machine(exec_time, power=power)
            task = make_task(0, arrival=-1000.0, deadline=deadline, num_machine_types=1)
            completion, feasible = expected_completion_time(task, machine, start)
            energy = expected_energy_consumption(task, machine, start)
            o_completion, o_feasible, o_energy = oracle_cases(start, exec_time, deadline, power)
            assert completion == o_completion
            assert feasible == o_feasible
            assert energy == o_energy


class TestExpectedStartTime:
    def test_idle_machine_starts_now(self):
        machine = pair_machine(1.0)
        assert expected_start_time(machine, 3.0) == 3.0

    def test_running_task_delays_start(self):
        machine = pair_machine(1.0)
        occupant = make_task(1, deadline=100.0, num_machine_types=1)
        machine.running = RunningTask(occupant, 2.0, 5.0, True)
        assert expected_start_time(machine, 3.0) == 5.0

    def test_queued_task_adds_expected_runtime(self):
        eet = EETMatrix([[2.0]])
        machine = make_machine(eet)
        occupant = make_task(1, deadline=100.0, num_machine_types=1)
        machine.running = RunningTask(occupant, 2.0, 5.0, True)
        machine.queue.append(make_task(2, deadline=20.0, num_machine_types=1))
        assert expected_start_time(machine, 3.0) == 7.0

    def test_queued_task_truncated_at_its_deadline(self):
        eet = EETMatrix([[4.0]])
        machine = make_machine(eet)
        occupant = make_task(1, deadline=100.0, num_machine_types=1)
        machine.running = RunningTask(occupant, 2.0, 5.0, True)
        machine.queue.append(make_task(2, deadline=6.0, num_machine_types=1))
        # the queued task would run 5 -> 9 but dies at 6
        assert expected_start_time(machine, 3.0) == 6.0

    def test_expired_queued_task_occupies_nothing(self):
        eet = EETMatrix([[4.0]])
        machine = make_machine(eet)
        occupant = make_task(1, deadline=100.0, num_machine_types=1)
        machine.running = RunningTask(occupant, 2.0, 5.0, True)
        machine.queue.append(make_task(2, deadline=4.5, num_machine_types=1))
        assert expected_start_time(machine, 3.0) == 5.0


def single_machine_scenario(exec_time=2.0, power=2.0, idle_power=0.05, capacity=2,
                            budget=100.0):
    eet = EETMatrix([[exec_time]])
    return Scenario(
        eet=eet,
        machines=[MachineSpec(0, power, idle_power)],
        queue_capacity=capacity,
        energy_budget=budget,
    )


def defer_all(queue, machines, eet, now, fairness):
    return MappingDecision(deferrals=[t.task_id for t in queue])


def assign_all_to_machine_zero(queue, machines, eet, now, fairness):
    free = machines[0].capacity - len(machines[0].queue)
    picks = queue[:free]
    return MappingDecision(
        assignments=[(t.task_id, 0) for t in picks],
        deferrals=[t.task_id for t in queue[len(picks):]],
    )


class TestRunSimulation:
    def test_empty_workload(self):
        report = run_simulation(default_scenario(), trace_of([]), "mm", check_invariants=True)
        assert report.total_arrived == 0
        assert report.total_energy == 0.0
        assert report.end_time == 0.0

    def test_single_feasible_task(self):
        scenario = single_machine_scenario(exec_time=2.0, power=2.0)
        task = make_task(0, arrival=0.0, deadline=10.0, true_exec=(1.5,))
        report = run_simulation(scenario, trace_of([task]), "mm", check_invariants=True)
        assert report.completed == [1]
        assert report.useful_energy == pytest.approx(2.0 * 1.5, abs=1e-12)
        assert report.wasted_energy == 0.0
        assert report.idle_energy == 0.0  # busy from arrival to the only terminal event
        assert report.end_time == pytest.approx(1.5, abs=1e-12)

    def test_idle_energy_before_first_arrival(self):
        scenario = single_machine_scenario(idle_power=0.05)
        task = make_task(0, arrival=10.0, deadline=20.0, true_exec=(2.0,))
        report = run_simulation(scenario, trace_of([task]), "mm", check_invariants=True)
        assert report.idle_energy == pytest.approx(0.5, abs=1e-12)

    def test_idle_energy_between_tasks(self):
        scenario = single_machine_scenario(idle_power=0.05)
        tasks = [
            make_task(0, arrival=0.0, deadline=10.0, true_exec=(2.0,)),
            make_task(1, arrival=6.0, deadline=16.0, true_exec=(3.0,)),
        ]
        report = run_simulation(scenario, trace_of(tasks), "mm", check_invariants=True)
        # busy [0, 2] and [6, 9]; idle [2, 6]
        assert report.idle_energy == pytest.approx(0.05 * 4.0, abs=1e-12)
        assert report.end_time == pytest.approx(9.0, abs=1e-12)

    def test_busy_whole_horizon_no_idle(self):
        scenario = single_machine_scenario()
        task = make_task(0, arrival=0.0, deadline=50.0, true_exec=(7.0,))
        report = run_simulation(scenario, trace_of([task]), "elare", check_invariants=True)
        assert report.idle_energy == 0.0

    def test_midrun_deadline_cut_books_wasted_energy(self):
        scenario = single_machine_scenario(power=2.0)
        # runs 0 -> 8 but the deadline hits at 5
        task = make_task(0, arrival=0.0, deadline=5.0, true_exec=(8.0,))
        report = run_simulation(
            scenario, trace_of([task]), assign_all_to_machine_zero, check_invariants=True
        )
        assert report.missed == [1]
        assert report.wasted_energy == pytest.approx(2.0 * 5.0, abs=1e-12)
        assert report.useful_energy == 0.0
        assert report.end_time == pytest.approx(5.0, abs=1e-12)

    def test_finish_exactly_at_deadline_completes(self):
        scenario = single_machine_scenario(power=2.0)
        task = make_task(0, arrival=0.0, deadline=3.0, true_exec=(3.0,))
        report = run_simulation(
            scenario, trace_of([task]), assign_all_to_machine_zero, check_invariants=True
        )
        assert report.completed == [1]

    def test_waiting_task_cancelled_at_deadline_with_zero_energy(self):
        scenario = single_machine_scenario(idle_power=0.05)
        task = make_task(0, arrival=0.0, deadline=4.0, true_exec=(1.0,))
        report = run_simulation(scenario, trace_of([task]), defer_all, check_invariants=True)
        assert report.cancelled == [1]
        assert report.useful_energy == 0.0
        assert report.wasted_energy == 0.0
        assert report.idle_energy == pytest.approx(0.05 * 4.0, abs=1e-12)
        assert report.deferred == [1]  # one deferral verdict at the arrival event

    def test_queued_task_cancelled_while_waiting(self):
        scenario = single_machine_scenario(exec_time=2.0)
        tasks = [
            make_task(0, arrival=0.0, deadline=50.0, true_exec=(10.0,)),
            make_task(1, arrival=0.5, deadline=3.0, true_exec=(1.0,)),
        ]
        report = run_simulation(
            scenario, trace_of(tasks), assign_all_to_machine_zero,
            collect_event_log=True, check_invariants=True,
        )
        assert report.completed == [1]
        assert report.cancelled == [1]
        cancel_rows = [r for r in report.event_log if r[1] == "cancelled"]
        assert len(cancel_rows) == 1
        assert cancel_rows[0][0] == 3.0  # cancelled exactly at its deadline
        assert "reason=expired" in cancel_rows[0][4]

    def test_fifo_service_order(self):
        scenario = single_machine_scenario(exec_time=1.0, capacity=3)
        tasks = [
            make_task(i, arrival=0.1 * i, deadline=100.0, true_exec=(1.0,))
            for i in range(4)
        ]
        report = run_simulation(
            scenario, trace_of(tasks), assign_all_to_machine_zero,
            collect_event_log=True, check_invariants=True,
        )
        starts = [r for r in report.event_log if r[1] == "start"]
        assert [r[2] for r in starts] == [0, 1, 2, 3]
        assert report.completed == [4]

    def test_mapper_drop_of_queued_task_frees_slot(self):
        # a decision may evict a queued task and refill the slot immediately
        scenario = single_machine_scenario(exec_time=2.0, capacity=1)

        def evict_then_fill(queue, machines, eet, now, fairness):
            machine = machines[0]
            if machine.queue and queue:
                return MappingDecision(
                    assignments=[(queue[0].task_id, 0)],
                    deferrals=[t.task_id for t in queue[1:]],
                    drops=[machine.queue[-1].task_id],
                )
            return assign_all_to_machine_zero(queue, machines, eet, now, fairness)

        tasks = [
            make_task(0, arrival=0.0, deadline=50.0, true_exec=(5.0,)),
            make_task(1, arrival=0.5, deadline=50.0, true_exec=(1.0,)),
            make_task(2, arrival=1.0, deadline=50.0, true_exec=(1.0,)),
        ]
        report = run_simulation(
            scenario, trace_of(tasks), evict_then_fill,
            collect_event_log=True, check_invariants=True,
        )
        # task 0 runs (started before 1 arrived), task 1 was queued and then
        # evicted in favor of task 2
        cancelled = [r for r in report.event_log if r[1] == "cancelled"]
        assert [r[2] for r in cancelled] == [1]
        assert "reason=dropped" in cancelled[0][4]
        assert report.completed == [2]
        assert report.cancelled == [1]

    def test_assignment_to_full_queue_is_contract_violation(self):
        scenario = single_machine_scenario(capacity=1)

        def overfill(queue, machines, eet, now, fairness):
            return MappingDecision(assignments=[(t.task_id, 0) for t in queue])

        tasks = [
            make_task(0, arrival=0.0, deadline=50.0, true_exec=(5.0,)),
            make_task(1, arrival=0.1, deadline=50.0, true_exec=(5.0,)),
            make_task(2, arrival=0.1, deadline=50.0, true_exec=(5.0,)),
        ]
        with pytest.raises(ContractViolationError, match="overfill"):
            run_simulation(scenario, trace_of(tasks), overfill)

    def test_overlapping_decision_lists_rejected(self):
        scenario = single_machine_scenario()

        def contradictory(queue, machines, eet, now, fairness):
            t = queue[0].task_id
            return MappingDecision(assignments=[(t, 0)], drops=[t])

        task = make_task(0, arrival=0.0, deadline=50.0, true_exec=(1.0,))
        with pytest.raises(ContractViolationError, match="overlap"):
            run_simulation(scenario, trace_of([task]), contradictory)

    def test_unknown_heuristic_name(self):
        scenario = single_machine_scenario()
        task = make_task(0, arrival=0.0, deadline=5.0, true_exec=(1.0,))
        with pytest.raises(ValueError, match="unknown heuristic"):
            run_simulation(scenario, trace_of([task]), "random")

    def test_workload_reuse_is_side_effect_free(self):
        scenario = default_scenario()
        eet = scenario.eet
        from edgesim.workload import generate_workload

        trace = generate_workload(eet, 3.0, 80, seed=4)
        before = [(t.status, t.machine_id) for t in trace.tasks]
        run_simulation(scenario, trace, "mm")
        assert [(t.status, t.machine_id) for t in trace.tasks] == before

    def test_determinism_bit_identical_reports(self):
        scenario = default_scenario()
        from edgesim.workload import generate_workload

        trace = generate_workload(scenario.eet, 4.0, 150, seed=12)
        a = run_simulation(scenario, trace, "elare", collect_event_log=True,
                           check_invariants=True)
        b = run_simulation(scenario, trace, "elare", collect_event_log=True,
                           check_invariants=True)
        assert a.to_dict() == b.to_dict()

    @pytest.mark.parametrize("heuristic", ["mm", "msd", "mmu", "elare", "felare"])
    def test_invariants_hold_under_all_heuristics(self, heuristic):
        scenario = default_scenario()
        from edgesim.workload import generate_workload

        trace = generate_workload(scenario.eet, 5.0, 150, seed=77)
        report = run_simulation(scenario, trace, heuristic, check_invariants=True)
        assert report.total_arrived == 150
        assert (
            report.total_completed + report.total_missed + report.total_cancelled == 150
        )
        assert report.total_energy == pytest.approx(
            report.useful_energy + report.wasted_energy + report.idle_energy
        )

    def test_account_idle_energy_direct(self):
        scenario = default_scenario()
        state = SimulationState(scenario, trace_of([]))
        state.account_idle_energy(10.0)
        for machine in state.machines:
            assert machine.idle_energy == pytest.approx(0.05 * 10.0, abs=1e-12)
        assert state.now == 10.0

    def test_fairness_window_plumbed_through(self):
        scenario = default_scenario()
        from edgesim.workload import generate_workload

        trace = generate_workload(scenario.eet, 4.0, 120, seed=6)
        windowed = run_simulation(scenario, trace, "felare", fairness_window=10.0,
                                  check_invariants=True)
        cumulative = run_simulation(scenario, trace, "felare", check_invariants=True)
        assert windowed.total_arrived == cumulative.total_arrived == 120

    def test_scenario_validation(self):
        eet = EETMatrix([[1.0]])
        with pytest.raises(ValueError, match="at least one machine"):
            Scenario(eet=eet, machines=[])
        with pytest.raises(ValueError, match="outside EET columns"):
            Scenario(eet=eet, machines=[MachineSpec(1, 1.0, 0.0)])
        with pytest.raises(ValueError, match="dynamic power"):
            Scenario(eet=eet, machines=[MachineSpec(0, 0.0, 0.0)])
        with pytest.raises(ValueError, match="queue capacity"):
            Scenario(eet=eet, machines=[MachineSpec(0, 1.0, 0.0)], queue_capacity=0)
        with pytest.raises(ValueError, match="energy budget"):
            Scenario(eet=eet, machines=[MachineSpec(0, 1.0, 0.0)], energy_budget=0.0)

    def test_workload_scenario_consistency_checked(self):
        scenario = single_machine_scenario()
        bad_type = make_task(0, type_id=3, deadline=5.0, true_exec=(1.0,))
        with pytest.raises(ValueError, match="outside EET rows"):
            run_simulation(scenario, trace_of([bad_type]), "mm")
        bad_width = make_task(0, type_id=0, deadline=5.0, true_exec=(1.0, 2.0))
        with pytest.raises(ValueError, match="true execution times"):
            run_simulation(scenario, trace_of([bad_width]), "mm")

    def test_fairness_trace_collection(self):
        scenario = default_scenario()
        from edgesim.workload import generate_workload

        trace = generate_workload(scenario.eet, 4.0, 60, seed=3)
        report = run_simulation(
            scenario, trace, "felare", {"f": 1.0}, collect_fairness_trace=True
        )
        assert report.fairness_trace
        times = [row[0] for row in report.fairness_trace]
        assert times == sorted(times)
        assert len(report.fairness_trace[0]) == 1 + 4 + 4
