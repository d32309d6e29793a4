"""Experiment runner.

One JSON config file fully determines an experiment: scenario (machines,
queue bound, energy budget), EET source (inline values, CSV file, or CVB
synthesis parameters), workload parameters, heuristics, and seeds.  For each
(rate, seed) pair the workload is generated once and replayed under every
heuristic so comparisons are paired.

Subcommands: run, validate, gen-workload, report.
"""

from __future__ import annotations

import argparse
import csv
import json
import multiprocessing
import sys
from dataclasses import dataclass
from pathlib import Path

from .heuristics import HEURISTIC_NAMES
from .metrics import (
    SimulationReport,
    aggregate_sweep,
    sweep_summary,
    write_results_table,
)
from .simcore import MachineSpec, Scenario, run_simulation
from .workload import (
    EETMatrix,
    generate_eet_cvb,
    generate_workload,
    load_eet,
    save_trace,
)

EVENT_LOG_HEADER = ("time", "event_kind", "task_id", "machine_id", "detail")


@dataclass
class ExperimentConfig:
    scenario: Scenario
    arrival_rates: list[float]
    num_tasks: int
    type_shares: list[float] | None
    exec_cv: float
    heuristics: list[tuple[str, str, dict]]  # (label, name, params)
    seeds: list[int]
    export_event_log: bool
    export_fairness_trace: bool
    raw: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        problems = validate_config(raw)
        if problems:
            raise ValueError("invalid config:\n" + "\n".join(problems))
        eet = _build_eet(raw["eet"])
        scen = raw["scenario"]
        scenario = Scenario(
            eet=eet,
            machines=[
                MachineSpec(m["type_id"], m["dynamic_power"], m["idle_power"])
                for m in scen["machines"]
            ],
            queue_capacity=scen.get("queue_capacity", 2),
            energy_budget=scen.get("energy_budget", 5000.0),
        )
        wl = raw["workload"]
        export = raw.get("export", {})
        return cls(
            scenario=scenario,
            arrival_rates=[float(r) for r in wl["arrival_rates"]],
            num_tasks=int(wl["num_tasks"]),
            type_shares=wl.get("type_shares"),
            exec_cv=float(wl.get("exec_cv", 0.1)),
            heuristics=_parse_heuristics(raw["heuristics"]),
            seeds=_parse_seeds(raw["seeds"]),
            export_event_log=bool(export.get("event_log", False)),
            export_fairness_trace=bool(export.get("fairness_trace", False)),
            raw=raw,
        )


def _build_eet(spec: dict) -> EETMatrix:
    if "values" in spec:
        return EETMatrix(spec["values"])
    if "file" in spec:
        return load_eet(spec["file"])
    cvb = spec["cvb"]
    return generate_eet_cvb(
        num_task_types=int(cvb["num_task_types"]),
        num_machine_types=int(cvb["num_machine_types"]),
        task_cv=float(cvb["task_cv"]),
        machine_cv=float(cvb["machine_cv"]),
        mean_exec=float(cvb["mean_exec"]),
        seed=int(cvb["seed"]),
    )


def _parse_heuristics(entries) -> list[tuple[str, str, dict]]:
    parsed = []
    for entry in entries:
        if isinstance(entry, str):
            name, params = entry, {}
        else:
            params = dict(entry)
            name = params.pop("name")
        label = name
        if name == "felare" and params.get("f", 1.0) != 1.0:
            label = f"felare_f{params['f']:g}"
        parsed.append((label, name, params))
    return parsed


def _parse_seeds(spec) -> list[int]:
    if isinstance(spec, dict):
        base = int(spec.get("base", 0))
        return list(range(base, base + int(spec["count"])))
    return [int(s) for s in spec]


def validate_config(raw: dict) -> list[str]:
    """Collect every violation in the config; an empty list means valid."""
    problems: list[str] = []

    def check(cond, message):
        if not cond:
            problems.append(message)
        return cond

    if not check(isinstance(raw, dict), "config: must be a JSON object"):
        return problems

    eet = None
    eet_spec = raw.get("eet")
    if check(isinstance(eet_spec, dict), "eet: missing or not an object"):
        sources = [k for k in ("values", "file", "cvb") if k in eet_spec]
        if check(len(sources) == 1, "eet: give exactly one of values, file, or cvb"):
            try:
                eet = _build_eet(eet_spec)
            except Exception as exc:
                problems.append(f"eet: {exc}")

    scen = raw.get("scenario")
    if check(isinstance(scen, dict), "scenario: missing or not an object"):
        machines = scen.get("machines")
        if check(isinstance(machines, list) and machines, "scenario.machines: need at least one machine"):
            for i, m in enumerate(machines):
                if not isinstance(m, dict) or not {"type_id", "dynamic_power", "idle_power"} <= m.keys():
                    problems.append(f"scenario.machines[{i}]: need type_id, dynamic_power, idle_power")
                    continue
                if m["dynamic_power"] <= 0:
                    problems.append(f"scenario.machines[{i}].dynamic_power: must be positive")
                if m["idle_power"] < 0:
                    problems.append(f"scenario.machines[{i}].idle_power: must be non-negative")
                if eet is not None and not 0 <= m["type_id"] < eet.num_machine_types:
                    problems.append(f"scenario.machines[{i}].type_id: outside EET columns")
            if eet is not None and isinstance(machines, list) and len(machines) != eet.num_machine_types:
                problems.append(
                    f"scenario.machines: {len(machines)} machines configured but EET has "
                    f"{eet.num_machine_types} machine-type columns"
                )
        if scen.get("queue_capacity", 2) < 1:
            problems.append("scenario.queue_capacity: must be at least 1")
        if scen.get("energy_budget", 5000.0) <= 0:
            problems.append("scenario.energy_budget: must be positive")

    wl = raw.get("workload")
    if check(isinstance(wl, dict), "workload: missing or not an object"):
        rates = wl.get("arrival_rates")
        if check(isinstance(rates, list) and rates, "workload.arrival_rates: need at least one rate"):
            for r in rates:
                if not isinstance(r, (int, float)) or r <= 0:
                    problems.append(f"workload.arrival_rates: rates must be positive, got {r!r}")
        if wl.get("num_tasks", 0) < 1:
            problems.append("workload.num_tasks: must be at least 1")
        shares = wl.get("type_shares")
        if shares is not None:
            if any(not isinstance(s, (int, float)) or s < 0 for s in shares):
                problems.append("workload.type_shares: shares must be non-negative numbers")
            elif abs(sum(shares) - 1.0) > 1e-9:
                problems.append(f"workload.type_shares: must sum to 1, got {sum(shares)}")
            if eet is not None and len(shares) != eet.num_task_types:
                problems.append(
                    f"workload.type_shares: {len(shares)} shares but EET has "
                    f"{eet.num_task_types} task-type rows"
                )
        if wl.get("exec_cv", 0.1) < 0:
            problems.append("workload.exec_cv: must be non-negative")

    entries = raw.get("heuristics")
    if check(isinstance(entries, list) and entries, "heuristics: need at least one"):
        labels = []
        for i, entry in enumerate(entries):
            name = entry if isinstance(entry, str) else (entry.get("name") if isinstance(entry, dict) else None)
            if name not in HEURISTIC_NAMES:
                problems.append(f"heuristics[{i}]: unknown heuristic {name!r}")
                continue
            if isinstance(entry, dict):
                extra = set(entry) - {"name", "f"}
                if extra:
                    problems.append(f"heuristics[{i}]: unknown keys {sorted(extra)}")
                if name == "felare" and entry.get("f", 1.0) < 0:
                    problems.append(f"heuristics[{i}]: fairness factor must be non-negative")
                if name != "felare" and "f" in entry:
                    problems.append(f"heuristics[{i}]: only felare takes a fairness factor")
        if not problems:
            labels = [label for label, _, _ in _parse_heuristics(entries)]
            if len(labels) != len(set(labels)):
                problems.append("heuristics: duplicate entries produce colliding output names")

    seeds = raw.get("seeds")
    if isinstance(seeds, dict):
        if seeds.get("count", 0) < 1:
            problems.append("seeds.count: must be at least 1")
    elif isinstance(seeds, list):
        if not seeds:
            problems.append("seeds: need at least one seed")
    else:
        problems.append("seeds: give a list of integers or {count, base}")

    return problems


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def enumerate_runs(config: ExperimentConfig) -> list[tuple[str, float, int]]:
    """All (heuristic label, rate, seed) runs the config describes."""
    return [
        (label, rate, seed)
        for rate in config.arrival_rates
        for seed in config.seeds
        for label, _, _ in config.heuristics
    ]


def _run_label(label: str, rate: float, seed: int) -> str:
    return f"{label}_r{rate:g}_s{seed}"


def _run_pair_job(payload) -> list[dict]:
    """Run every heuristic on one (rate, seed) workload; used by the pool."""
    raw, out_dir, rate, seed = payload
    config = ExperimentConfig.from_dict(raw)
    out = Path(out_dir)
    workload = generate_workload(
        config.scenario.eet, rate, config.num_tasks,
        type_shares=config.type_shares, exec_cv=config.exec_cv, seed=seed,
    )
    results = []
    for label, name, params in config.heuristics:
        report = run_simulation(
            config.scenario, workload, name, params,
            collect_event_log=config.export_event_log,
            collect_fairness_trace=config.export_fairness_trace,
        )
        report.heuristic = label
        stem = _run_label(label, rate, seed)
        if config.export_event_log:
            _write_event_log(report.event_log, out / "events" / f"{stem}.csv")
        if config.export_fairness_trace:
            _write_fairness_trace(
                report.fairness_trace, config.scenario.eet.num_task_types,
                out / "fairness" / f"{stem}.csv",
            )
        data = report.to_dict()
        data["event_log"] = f"events/{stem}.csv" if config.export_event_log else None
        data["fairness_trace"] = f"fairness/{stem}.csv" if config.export_fairness_trace else None
        with open(out / "reports" / f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")
        data_mem = dict(data)
        data_mem["event_log"] = None
        data_mem["fairness_trace"] = None
        results.append(data_mem)
    return results


def _write_event_log(rows, path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_LOG_HEADER)
        for time, kind, task_id, machine_id, detail in rows:
            writer.writerow([repr(time), kind, task_id, machine_id, detail])


def _write_fairness_trace(rows, num_types, path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["time"] + [f"cr_{i}" for i in range(num_types)]
            + ["mean", "std", "limit", "suffered"]
        )
        for row in rows:
            writer.writerow(row)


def run_experiment(config: ExperimentConfig, output_dir, workers: int = 1) -> dict:
    """Execute the full sweep; returns the aggregate summary."""
    out = Path(output_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    marker = out / "INCOMPLETE"
    marker.write_text("experiment in progress or aborted\n", encoding="utf-8")
    jobs = [
        (config.raw, str(out), rate, seed)
        for rate in config.arrival_rates
        for seed in config.seeds
    ]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            batches = pool.map(_run_pair_job, jobs)
    else:
        batches = [_run_pair_job(job) for job in jobs]
    reports = [SimulationReport.from_dict(d) for batch in batches for d in batch]
    write_results_table(reports, out / "sweep.csv")
    summary = sweep_summary(aggregate_sweep(reports))
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    marker.unlink()
    return summary


def recompute_from_event_log(rows, config: ExperimentConfig) -> dict:
    """Rebuild counters and energy totals from an exported event log.

    Independent of the engine's ledgers: useful/wasted energy come from the
    logged per-task amounts, idle energy from machine busy intervals against
    the log horizon.  Serves as an offline cross-check of stored runs.
    """
    num_types = config.scenario.eet.num_task_types
    counters = {k: [0] * num_types for k in ("arrived", "completed", "missed", "cancelled")}
    useful = wasted = 0.0
    start_times: dict[int, tuple[float, int]] = {}
    busy = {i: 0.0 for i in range(len(config.scenario.machines))}
    horizon = 0.0
    for time, kind, task_id, machine_id, detail in rows:
        time = float(time)
        fields = dict(part.split("=", 1) for part in detail.split(";") if part)
        type_id = int(fields["type"])
        if kind == "arrival":
            counters["arrived"][type_id] += 1
        elif kind == "start":
            start_times[int(task_id)] = (time, int(machine_id))
        elif kind in ("completed", "missed", "cancelled"):
            counters[kind][type_id] += 1
            horizon = max(horizon, time)
            if kind != "cancelled":
                begun, mid = start_times.pop(int(task_id))
                busy[mid] += time - begun
                amount = float(fields["energy"])
                if kind == "completed":
                    useful += amount
                else:
                    wasted += amount
    idle = sum(
        spec.idle_power * (horizon - busy[i])
        for i, spec in enumerate(config.scenario.machines)
    )
    return {
        "arrived": counters["arrived"],
        "completed": counters["completed"],
        "missed": counters["missed"],
        "cancelled": counters["cancelled"],
        "useful_energy": useful,
        "wasted_energy": wasted,
        "idle_energy": idle,
        "end_time": horizon,
    }


def _cmd_validate(args) -> int:
    problems = validate_config(load_config(args.config))
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 2
    print("config ok")
    return 0


def _cmd_run(args) -> int:
    raw = load_config(args.config)
    problems = validate_config(raw)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 2
    if args.export_event_log or args.export_fairness_trace:
        export = dict(raw.get("export", {}))
        if args.export_event_log:
            export["event_log"] = True
        if args.export_fairness_trace:
            export["fairness_trace"] = True
        raw["export"] = export
    config = ExperimentConfig.from_dict(raw)
    run_experiment(config, args.output_dir, workers=args.workers)
    print(f"wrote {len(enumerate_runs(config))} runs under {args.output_dir}")
    return 0


def _cmd_gen_workload(args) -> int:
    raw = load_config(args.config)
    problems = validate_config(raw)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 2
    config = ExperimentConfig.from_dict(raw)
    trace = generate_workload(
        config.scenario.eet, args.rate, config.num_tasks,
        type_shares=config.type_shares, exec_cv=config.exec_cv, seed=args.seed,
    )
    save_trace(trace, args.out)
    print(f"wrote {len(trace.tasks)} tasks to {args.out}")
    return 0


def _cmd_report(args) -> int:
    raw = load_config(args.config)
    problems = validate_config(raw)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 2
    config = ExperimentConfig.from_dict(raw)
    with open(args.events, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [tuple(row) for row in reader]
    recomputed = recompute_from_event_log(rows, config)
    text = json.dumps(recomputed, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgesim",
        description="Deterministic edge-scheduling simulator and experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the experiment described by a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output-dir", required=True)
    p_run.add_argument("--workers", type=int, default=1,
                       help="parallel (rate, seed) workers; default serial")
    p_run.add_argument("--export-event-log", action="store_true")
    p_run.add_argument("--export-fairness-trace", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config file, printing every problem")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_gen = sub.add_parser("gen-workload", help="write one workload trace as CSV")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--rate", type=float, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen_workload)

    p_rep = sub.add_parser("report", help="recompute metrics from a stored event log")
    p_rep.add_argument("--config", required=True)
    p_rep.add_argument("--events", required=True)
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
