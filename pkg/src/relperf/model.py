"""Agent types, populations and discrete type distributions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from relperf import rng
from relperf.errors import DomainError, NumericError

WEIGHT_TOL = 1e-12


class ModelKind(enum.Enum):
    """Utility family: exponential (CARA) or power/log (CRRA)."""

    CARA = "cara"
    CRRA = "crra"

    @classmethod
    def parse(cls, value: "ModelKind | str") -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown model kind {value!r}; expected 'cara' or 'crra'") from None


@dataclass(frozen=True)
class AgentType:
    """One agent's type vector.

    Attributes
    ----------
    x0 : float
        Initial wealth. Any real under CARA, strictly positive under CRRA.
    delta : float
        Risk tolerance, ``> 0``.
    theta : float
        Competition weight in ``[0, 1]``.
    mu : float
        Drift of the agent's stock, ``> 0``.
    nu : float
        Idiosyncratic volatility, ``>= 0``.
    sigma : float
        Loading on the common noise, ``>= 0``.
    """

    x0: float
    delta: float
    theta: float
    mu: float
    nu: float
    sigma: float

    @property
    def total_var(self) -> float:
        """``sigma**2 + nu**2``."""
        return self.sigma * self.sigma + self.nu * self.nu

    def replace(self, **changes: float) -> "AgentType":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return AgentType(**values)

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


AGENT_FIELDS = tuple(f.name for f in fields(AgentType))


def validate_type(t: AgentType, kind: ModelKind) -> None:
    """Raise :class:`DomainError` naming the first violated constraint."""
    for name in AGENT_FIELDS:
        value = getattr(t, name)
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise DomainError(f"{name} must be a finite real (got {value!r})")
    if not t.delta > 0:
        raise DomainError(f"delta must be > 0 (got {t.delta})")
    if not 0.0 <= t.theta <= 1.0:
        raise DomainError(f"theta must lie in [0,1] (got {t.theta})")
    if not t.mu > 0:
        raise DomainError(f"mu must be > 0 (got {t.mu})")
    if t.nu < 0:
        raise DomainError(f"nu must be >= 0 (got {t.nu})")
    if t.sigma < 0:
        raise DomainError(f"sigma must be >= 0 (got {t.sigma})")
    if not t.sigma + t.nu > 0:
        raise DomainError("sigma+nu must be > 0")
    if kind is ModelKind.CRRA and not t.x0 > 0:
        raise DomainError(f"x0>0 is required under CRRA (got {t.x0})")


class _FieldArrays:
    """Column views shared by populations and distributions."""

    agents: tuple[AgentType, ...]

    def _column(self, name: str) -> np.ndarray:
        col = np.array([getattr(a, name) for a in self.agents], dtype=np.float64)
        col.setflags(write=False)
        return col

    @cached_property
    def x0(self) -> np.ndarray:
        return self._column("x0")

    @cached_property
    def delta(self) -> np.ndarray:
        return self._column("delta")

    @cached_property
    def theta(self) -> np.ndarray:
        return self._column("theta")

    @cached_property
    def mu(self) -> np.ndarray:
        return self._column("mu")

    @cached_property
    def nu(self) -> np.ndarray:
        return self._column("nu")

    @cached_property
    def sigma(self) -> np.ndarray:
        return self._column("sigma")


@dataclass(frozen=True, eq=False)
class Population(_FieldArrays):
    """Ordered agents of an n-player game."""

    agents: tuple[AgentType, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) < 1:
            raise DomainError("a population needs n >= 1 agents")

    @property
    def n(self) -> int:
        return len(self.agents)

    def __len__(self) -> int:
        return len(self.agents)

    def __getitem__(self, i: int) -> AgentType:
        return self.agents[i]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Population) and self.agents == other.agents

    def __hash__(self) -> int:
        return hash(self.agents)

    def validate(self, kind: ModelKind) -> None:
        for i, a in enumerate(self.agents):
            try:
                validate_type(a, kind)
            except DomainError as exc:
                raise DomainError(f"agent {i}: {exc}") from None


@dataclass(frozen=True, eq=False)
class TypeDistribution(_FieldArrays):
    """Finite discrete law over agent types.

    Weights must be strictly positive and sum to one within ``1e-12``.
    They are never renormalized.
    """

    agents: tuple[AgentType, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        agents = tuple(self.agents)
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if len(agents) == 0:
            raise DomainError("a type distribution needs at least one atom")
        if w.shape[0] != len(agents):
            raise DomainError(f"{len(agents)} atoms but {w.shape[0]} weights")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("weights must be finite and strictly positive")
        total = math.fsum(w.tolist())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise DomainError(f"weights must sum to 1 within {WEIGHT_TOL:g} (got {total!r})")
        w.setflags(write=False)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[AgentType, float]]) -> "TypeDistribution":
        pairs = list(pairs)
        return cls(tuple(a for a, _ in pairs), np.array([w for _, w in pairs], dtype=np.float64))

    @classmethod
    def point_mass(cls, agent: AgentType) -> "TypeDistribution":
        return cls((agent,), np.ones(1))

    @property
    def atoms(self) -> tuple[AgentType, ...]:
        return self.agents

    def __len__(self) -> int:
        return len(self.agents)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TypeDistribution)
            and self.agents == other.agents
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self) -> int:
        return hash((self.agents, self.weights.tobytes()))

    def pairs(self) -> list[tuple[AgentType, float]]:
        return list(zip(self.agents, self.weights.tolist()))

    def mean(self, values: np.ndarray) -> float:
        """Weighted average of a per-atom array."""
        out = float(np.dot(self.weights, values))
        if not math.isfinite(out):
            raise NumericError("non-finite expectation")
        return out

    def validate(self, kind: ModelKind) -> None:
        for i, a in enumerate(self.agents):
            try:
                validate_type(a, kind)
            except DomainError as exc:
                raise DomainError(f"atom {i}: {exc}") from None

    def sample_indices(self, n: int, seed: int) -> np.ndarray:
        """Atom indices of ``n`` i.i.d. draws, deterministic in ``seed``."""
        if n < 1:
            raise DomainError("sample size must be >= 1")
        u = rng.uniforms(seed, rng.Role.TYPE, [0], np.arange(n, dtype=np.uint64))[:, 0]
        cdf = np.cumsum(self.weights)
        idx = np.searchsorted(cdf, u, side="right")
        return np.minimum(idx, len(self.agents) - 1)


@dataclass(frozen=True)
class SingleStockSpec:
    """Common stock shared by every agent (no idiosyncratic noise)."""

    mu: float
    sigma: float
    nu: float = 0.0

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise DomainError(f"mu must be > 0 (got {self.mu})")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0 (got {self.sigma})")
        if self.nu != 0.0:
            raise DomainError("a single-stock market has nu = 0")

    def agent(self, delta: float, theta: float, x0: float = 1.0) -> AgentType:
        return AgentType(x0=x0, delta=delta, theta=theta, mu=self.mu, nu=0.0, sigma=self.sigma)


def reparam_exclude_self(
    kind: ModelKind, delta_prime: float, theta_prime: float, n: int
) -> tuple[float, float]:
    """Map exclude-self preferences to equivalent include-self ``(delta, theta)``.

    Parameters
    ----------
    kind : ModelKind
    delta_prime : float
        Risk tolerance when the benchmark averages the other ``n - 1`` agents.
    theta_prime : float
        Competition weight in that benchmark.
    n : int
        Number of agents, at least 2.

    Returns
    -------
    tuple of float
        ``(delta, theta)`` for a benchmark that includes the agent.
        For CARA the payoff exponents agree exactly. For CRRA the payoffs agree
        up to a positive constant factor.
    """
    kind = ModelKind.parse(kind)
    if int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2 (got {n})")
    if not delta_prime > 0:
        raise DomainError(f"delta' must be > 0 (got {delta_prime})")
    if not 0.0 <= theta_prime <= 1.0:
        raise DomainError(f"theta' must lie in [0,1] (got {theta_prime})")
    # both maps share theta = n theta' / (n - 1 + theta')
    theta = theta_prime / ((n - 1) / n + theta_prime / n)
    boost = 1.0 + theta_prime / (n - 1)
    if kind is ModelKind.CARA:
        delta = delta_prime / boost
    else:
        p_prime = 1.0 - 1.0 / delta_prime
        if not p_prime * boost < 1.0:
            raise DomainError(
                "exclude-self CRRA map needs (1 - 1/delta')(1 + theta'/(n-1)) < 1"
                f" (got {p_prime * boost!r}); increase n"
            )
        delta = delta_prime / (delta_prime - (delta_prime - 1.0) * boost)
    if not (delta > 0 and 0.0 <= theta <= 1.0):
        raise DomainError(f"exclude-self map left the admissible region: delta={delta}, theta={theta}")
    return delta, theta


def empirical_distribution(p: Population) -> TypeDistribution:
    """Merge bitwise-identical agents; weight is multiplicity over ``n``."""
    counts: dict[AgentType, int] = {}
    for a in p.agents:
        counts[a] = counts.get(a, 0) + 1
    n = p.n
    atoms = tuple(counts)
    weights = np.array([counts[a] / n for a in atoms], dtype=np.float64)
    # multiplicities / n can miss 1 by a few ulps; fold the slack into the largest atom
    slack = 1.0 - math.fsum(weights.tolist())
    weights[int(np.argmax(weights))] += slack
    return TypeDistribution(atoms, weights)


def expect(d: TypeDistribution, f: Callable[[AgentType], float]) -> float:
    """Weighted sum ``sum_k w_k f(atom_k)``."""
    values = np.array([f(a) for a in d.agents], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericError(f"f returned a non-finite value on atom {bad}")
    return d.mean(values)


def population_of(agents: Sequence[AgentType] | Population) -> Population:
    return agents if isinstance(agents, Population) else Population(tuple(agents))
