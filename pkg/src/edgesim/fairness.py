"""Per-type completion-rate tracking and the suffered-type rule.

A type's completion rate is on-time completions divided by arrivals.  The
fairness limit is ``max(0, mean - f * population_std)`` over the defined
rates; any type strictly below the limit is "suffered" and gets priority
treatment from the felare heuristic.
"""

from __future__ import annotations

from collections import deque

ARRIVAL = "arrival"
ON_TIME_COMPLETION = "completed"
UNSUCCESSFUL = ("missed", "cancelled")


class FairnessState:
    """Cumulative (or windowed) per-type arrival and completion counters.

    With ``window=None`` rates cover the whole run.  With a finite window
    (seconds) only events newer than ``latest_time - window`` count; pruning
    happens on record, so rates are exact at event granularity.
    """

    def __init__(self, num_types: int, window: float | None = None):
        if num_types < 1:
            raise ValueError("num_types must be at least 1")
        if window is not None and window <= 0:
            raise ValueError("window must be positive when given")
        self.num_types = num_types
        self.window = window
        self.arrived = [0] * num_types
        self.completed = [0] * num_types
        self._events: deque | None = deque() if window is not None else None

    def update(self, kind: str, type_id: int, time: float = 0.0) -> None:
        if not 0 <= type_id < self.num_types:
            raise ValueError(f"type_id {type_id} out of range")
        if kind == ARRIVAL:
            self.arrived[type_id] += 1
        elif kind == ON_TIME_COMPLETION:
            self.completed[type_id] += 1
        elif kind in UNSUCCESSFUL:
            pass  # denominator was counted at arrival
        else:
            raise ValueError(f"unknown fairness event kind {kind!r}")
        if self._events is not None:
            self._events.append((time, kind, type_id))
            self._prune(time)

    def _prune(self, now: float) -> None:
        cutoff = now - self.window
        events = self._events
        while events and events[0][0] < cutoff:
            _, kind, type_id = events.popleft()
            if kind == ARRIVAL:
                self.arrived[type_id] -= 1
            elif kind == ON_TIME_COMPLETION:
                self.completed[type_id] -= 1

    def rates(self) -> dict[int, float]:
        """Completion rate per type with at least one arrival."""
        return {
            i: self.completed[i] / self.arrived[i]
            for i in range(self.num_types)
            if self.arrived[i] > 0
        }


def _defined_rates(rates) -> dict[int, float]:
    if rates is None:
        return {}
    if isinstance(rates, FairnessState):
        return rates.rates()
    if isinstance(rates, dict):
        return {i: float(r) for i, r in rates.items() if r is not None}
    return {i: float(r) for i, r in enumerate(rates) if r is not None}


def fairness_limit(rates, f: float) -> float:
    """``max(0, mean - f * population_std)`` over the defined rates."""
    if f < 0:
        raise ValueError("fairness factor must be non-negative")
    defined = _defined_rates(rates)
    if not defined:
        raise ValueError("no defined completion rates yet")
    values = list(defined.values())
    mean = sum(values) / len(values)
    variance = sum((v - mean) ** 2 for v in values) / len(values)
    return max(0.0, mean - f * variance**0.5)


def suffered_task_types(rates, f: float) -> set[int]:
    """Types whose rate falls strictly below the fairness limit.

    Strict comparison keeps the all-equal case (zero dispersion) from
    flagging every type at once.  No defined rates means nothing can be
    suffered yet.
    """
    defined = _defined_rates(rates)
    if not defined:
        return set()
    limit = fairness_limit(defined, f)
    return {i for i, rate in defined.items() if rate < limit}


def fairness_trace_row(now: float, num_types: int, rates, f: float) -> list:
    """One export row: time, per-type rates, mean, std, limit, suffered set."""
    defined = _defined_rates(rates)
    per_type = [defined.get(i, "") for i in range(num_types)]
    if defined:
        values = list(defined.values())
        mean = sum(values) / len(values)
        std = (sum((v - mean) ** 2 for v in values) / len(values)) ** 0.5
        limit = max(0.0, mean - f * std)
        suffered = sorted(suffered_task_types(defined, f))
    else:
        mean = std = limit = ""
        suffered = []
    return [now, *per_type, mean, std, limit, ";".join(str(i) for i in suffered)]
