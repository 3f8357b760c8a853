"""How fast n-agent equilibria approach the mean-field equilibrium.

Two sources of error are separated. ``REPLICATED_TYPE`` keeps the
empirical type law fixed, so only the ``1/n`` self-influence terms remain.
``IID_SAMPLED`` draws types at random, so the fluctuation of the empirical
law dominates.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from relperf import rng
from relperf.equilibria import solve
from relperf.errors import DomainError, NoEquilibrium
from relperf.model import ModelKind, Population, TypeDistribution
from relperf.reporting import csv_text


class ConvergenceMode(enum.Enum):
    REPLICATED_TYPE = "replicated_type"
    IID_SAMPLED = "iid_sampled"

    @classmethod
    def parse(cls, value: "ConvergenceMode | str") -> "ConvergenceMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown convergence mode {value!r}") from None


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    replication_count: int
    failures: int
    max_abs_error: float
    mean_abs_error: float


@dataclass(frozen=True)
class ConvergenceTable:
    mode: ConvergenceMode
    rows: tuple[ConvergenceRow, ...]

    CSV_HEADER = ("mode", "n", "replication_count", "failures", "max_abs_error", "mean_abs_error")

    def to_csv(self) -> str:
        return csv_text(
            self.CSV_HEADER,
            (
                (self.mode.value, r.n, r.replication_count, r.failures, r.max_abs_error, r.mean_abs_error)
                for r in self.rows
            ),
        )

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_csv().encode("utf-8"))
        return path

    @property
    def n_values(self) -> np.ndarray:
        return np.array([r.n for r in self.rows])

    @property
    def max_errors(self) -> np.ndarray:
        return np.array([r.max_abs_error for r in self.rows])

    @property
    def mean_errors(self) -> np.ndarray:
        return np.array([r.mean_abs_error for r in self.rows])


def sample_population(d: TypeDistribution, n: int, seed: int) -> Population:
    """``n`` i.i.d. draws from ``d``, deterministic in ``seed``."""
    idx = d.sample_indices(n, seed)
    return Population(tuple(d.agents[k] for k in idx))


def replicated_counts(weights: np.ndarray, n: int) -> np.ndarray:
    """Integer counts summing to ``n`` closest to ``n * weights`` (largest remainder)."""
    raw = np.asarray(weights, dtype=np.float64) * n
    counts = np.floor(raw).astype(np.int64)
    short = n - int(counts.sum())
    # stable sort keeps ties in atom order
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def fit_decay_exponent(ns: Sequence[float], errors: Sequence[float]) -> float:
    """``a`` in ``error ~ C n^-a`` by least squares on the log-log scale."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(errors, dtype=np.float64))
    if x.shape[0] < 2 or not np.all(np.isfinite(y)):
        raise DomainError("decay fit needs at least two positive errors")
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def _one_replication(kind, d, mfe_strategies, n, mode, seed, rep):
    if mode is ConvergenceMode.REPLICATED_TYPE:
        counts = replicated_counts(d.weights, n)
        idx = np.repeat(np.arange(len(d)), counts)
    else:
        idx = d.sample_indices(n, rng.derive_seed(seed, n, rep))
    p = Population(tuple(d.agents[k] for k in idx))
    try:
        res = solve(kind, p)
    except NoEquilibrium:
        return None
    return np.abs(res.strategies - mfe_strategies[idx])


def convergence_study(
    kind: ModelKind,
    d: TypeDistribution,
    n_list: Sequence[int],
    replications: int,
    seed: int,
    mode: ConvergenceMode | str = ConvergenceMode.REPLICATED_TYPE,
) -> ConvergenceTable:
    """Distance between n-agent and mean-field allocations for each ``n``.

    Each agent is compared with the mean-field allocation of its own type
    under ``d``. Replications whose n-agent game has no equilibrium are
    counted in ``failures`` and excluded from the error statistics. In
    ``REPLICATED_TYPE`` mode the population is deterministic, so every
    replication returns the same errors.

    Raises
    ------
    NoEquilibrium
        When ``d`` itself has no mean-field equilibrium.
    """
    kind = ModelKind.parse(kind)
    mode = ConvergenceMode.parse(mode)
    ns = [int(n) for n in n_list]
    if not ns or any(n < 1 for n in ns):
        raise DomainError("n_list needs positive sizes")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("n_list must be strictly increasing")
    if replications < 1:
        raise DomainError("replications must be >= 1")
    mfe = solve(kind, d)
    star = np.asarray(mfe.strategies)

    jobs = [(n, rep) for n in ns for rep in range(replications)]
    with ThreadPoolExecutor(max_workers=rng.thread_count()) as pool:
        results = list(pool.map(lambda job: _one_replication(kind, d, star, job[0], mode, seed, job[1]), jobs))

    rows = []
    for n in ns:
        errs = [r for (m, _), r in zip(jobs, results) if m == n]
        ok = [e for e in errs if e is not None]
        failures = len(errs) - len(ok)
        if ok:
            stacked = np.concatenate(ok)
            max_err, mean_err = float(np.max(stacked)), float(np.mean(stacked))
        else:
            max_err = mean_err = math.nan
        rows.append(ConvergenceRow(n, replications, failures, max_err, mean_err))
    return ConvergenceTable(mode, tuple(rows))
