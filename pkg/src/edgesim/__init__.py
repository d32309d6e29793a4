"""Deterministic simulator and mapping heuristics for energy-limited
heterogeneous edge machines."""

from .fairness import FairnessState, fairness_limit, suffered_task_types
from .heuristics import (
    HEURISTIC_NAMES,
    CandidatePair,
    elare_phase1,
    elare_phase2,
    get_mapper,
    map_elare,
    map_felare,
    map_mm,
    map_mmu,
    map_msd,
)
from .metrics import (
    FairnessSummary,
    SimulationReport,
    SweepPoint,
    aggregate_sweep,
    fairness_report,
    mean_confidence_interval,
    pareto_front,
    sweep_summary,
    unsuccessful_breakdown,
    wasted_energy_pct,
    write_results_table,
)
from .simcore import (
    ContractViolationError,
    EventQueue,
    Machine,
    MachineSpec,
    MappingDecision,
    Scenario,
    SimulationState,
    expected_completion_time,
    expected_energy_consumption,
    expected_start_time,
    run_simulation,
)
from .workload import (
    EETFileError,
    EETMatrix,
    Task,
    TaskTypeProfile,
    WorkloadTrace,
    assign_deadline,
    generate_eet_cvb,
    generate_workload,
    load_eet,
    load_trace,
    save_eet,
    save_trace,
    trace_digest,
)

__version__ = "0.1.0"
