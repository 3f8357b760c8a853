"""Random instance generators shared by the test modules."""

from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np

from relperf import AgentType, ModelKind, NoEquilibrium, Population, solve


def agent(**kw) -> AgentType:
    base = dict(x0=1.0, delta=1.0, theta=0.0, mu=1.0, nu=0.0, sigma=1.0)
    base.update(kw)
    return AgentType(**{k: float(v) for k, v in base.items()})


def random_vol(gen: np.random.Generator) -> float:
    # one in ten volatilities is exactly zero so boundary cases stay covered
    return 0.0 if gen.random() < 0.1 else float(gen.uniform(0.1, 1.0))


def random_agent(gen: np.random.Generator, kind: ModelKind, log_share: float = 0.1) -> AgentType:
    while True:
        nu, sigma = random_vol(gen), random_vol(gen)
        if sigma + nu > 0:
            break
    delta = 1.0 if (kind is ModelKind.CRRA and gen.random() < log_share) else float(gen.uniform(0.1, 5.0))
    return AgentType(
        x0=float(gen.uniform(0.5, 2.0)) if kind is ModelKind.CRRA else float(gen.uniform(-2.0, 2.0)),
        delta=delta,
        theta=float(gen.uniform(0.0, 1.0)),
        mu=float(gen.uniform(0.05, 1.0)),
        nu=nu,
        sigma=sigma,
    )


def random_population(gen: np.random.Generator, kind: ModelKind, n_max: int = 10) -> Population:
    n = int(gen.integers(1, n_max + 1))
    return Population(tuple(random_agent(gen, kind) for _ in range(n)))


def solvable_instances(seed: int, kind: ModelKind, count: int, psi_max: float = 0.9, n_max: int = 10):
    """``count`` populations with an equilibrium (and ``psi_n <= psi_max`` for CARA)."""
    gen = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = random_population(gen, kind, n_max)
        try:
            res = solve(kind, p)
        except NoEquilibrium:
            continue
        if kind is ModelKind.CARA and res.aggregates.psi > psi_max:
            continue
        out.append((p, res))
    return out


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@contextmanager
def criterion(number: int, title: str):
    """Record a PASS/FAIL line for an acceptance criterion.

    The body may add measured values to the yielded dict; they are appended
    to the line. Any exception marks the criterion as failed and propagates.
    """
    facts: dict[str, object] = {}
    start = time.perf_counter()
    try:
        yield facts
    except BaseException as exc:
        line = f"CRITERION {number:2d}: FAIL  {title} ({type(exc).__name__}: {exc})"
        ACCEPTANCE_LINES.append(line.splitlines()[0])
        print(line)
        raise
    facts["time"] = f"{time.perf_counter() - start:.1f}s"
    detail = ", ".join(f"{k}={v}" for k, v in facts.items())
    line = f"CRITERION {number:2d}: PASS  {title} [{detail}]"
    ACCEPTANCE_LINES.append(line)
    print(line)
