"""Parameter sweeps over equilibrium allocations."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from relperf import rng
from relperf.config import SweepSpec
from relperf.equilibria import best_response_formula, solve
from relperf.errors import NoEquilibrium
from relperf.model import ModelKind, Population, TypeDistribution, validate_type
from relperf.reporting import csv_text


@dataclass(frozen=True)
class SweepResult:
    header: tuple[str, ...]
    rows: tuple[tuple, ...]

    def to_csv(self) -> str:
        return csv_text(self.header, self.rows)

    def to_dict(self) -> dict:
        return {"columns": list(self.header), "rows": [list(r) for r in self.rows]}


def _apply(source, spec: SweepSpec, point: tuple[float, ...]):
    agents = list(source.agents)
    probe = spec.probe
    for axis, value in zip(spec.axes, point):
        scope, name = axis.scope, axis.field_name
        if scope == "probe":
            probe = probe.replace(**{name: value})
        elif scope == "":
            agents = [a.replace(**{name: value}) for a in agents]
        else:
            i = int(scope)
            agents[i] = agents[i].replace(**{name: value})
    if isinstance(source, Population):
        return Population(tuple(agents)), probe
    return TypeDistribution(tuple(agents), source.weights), probe


def evaluate_cell(kind: ModelKind, source, spec: SweepSpec, point: tuple[float, ...]) -> tuple:
    """``(*point, pi_star, no_equilibrium)`` for one grid point."""
    src, probe = _apply(source, spec, point)
    if probe is not None:
        validate_type(probe, kind)
    try:
        res = solve(kind, src)
    except NoEquilibrium:
        return (*point, None, 1)
    if probe is not None:
        pi = best_response_formula(kind, probe, res.aggregates.aggregate_vol, None)
    else:
        pi = float(res.strategies[spec.target])
    return (*point, pi, 0)


def run_sweep(kind: ModelKind, source: Population | TypeDistribution, spec: SweepSpec) -> SweepResult:
    """Evaluate every grid point; rows follow the grid order (first axis outermost)."""
    kind = ModelKind.parse(kind)
    points = list(itertools.product(*(axis.values for axis in spec.axes)))
    with ThreadPoolExecutor(max_workers=rng.thread_count()) as pool:
        rows = list(pool.map(lambda pt: evaluate_cell(kind, source, spec, pt), points))
    header = (*(axis.label for axis in spec.axes), "pi_star", "no_equilibrium")
    return SweepResult(header, tuple(rows))
