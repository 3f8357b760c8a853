"""Exact sampling, closed-form and Monte Carlo payoffs, best-response search, consistency checks.

Wealth under a constant strategy has a closed-form law: Gaussian for CARA
and log-normal for CRRA. Every routine here samples or integrates that law
directly, so no time-stepping error enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from relperf import rng
from relperf.equilibria import EquilibriumResult, Setting
from relperf.errors import BracketError, DomainError, NumericError
from relperf.model import AgentType, ModelKind, Population, TypeDistribution

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    Attributes
    ----------
    horizon : float
        Investment horizon ``T > 0``.
    num_paths : int
        Number of common-noise scenarios.
    seed : int
        Unsigned 64-bit seed.
    num_agents_sampled : int
        Population size for mean-field consistency checks.
    time_steps : int
        Grid points per path for path output and the consistency check.
    """

    horizon: float = 1.0
    num_paths: int = 100_000
    seed: int = 0
    num_agents_sampled: int = 10_000
    time_steps: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise DomainError(f"horizon must be > 0 (got {self.horizon})")
        if int(self.num_paths) != self.num_paths or self.num_paths < 1:
            raise DomainError(f"num_paths must be an integer >= 1 (got {self.num_paths})")
        if int(self.num_agents_sampled) != self.num_agents_sampled or self.num_agents_sampled < 1:
            raise DomainError(f"num_agents_sampled must be an integer >= 1 (got {self.num_agents_sampled})")
        if int(self.time_steps) != self.time_steps or self.time_steps < 1:
            raise DomainError(f"time_steps must be an integer >= 1 (got {self.time_steps})")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    std_error: float
    num_paths: int
    certainty_equivalent: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "num_paths": self.num_paths,
            "certainty_equivalent": self.certainty_equivalent,
        }


@dataclass(frozen=True)
class ConsistencyReport:
    """Closed-form conditional aggregate versus a simulated population.

    The aggregate is ``intercept + drift t + vol B_t``: the arithmetic mean
    wealth for CARA and the log of the geometric mean for CRRA.
    ``eta`` is the drift of the geometric mean, ``drift + vol^2 / 2``, for
    CRRA. For CARA it equals ``drift``.
    """

    closed_form_intercept: float
    closed_form_drift: float
    closed_form_vol: float
    eta: float
    times: tuple[float, ...]
    closed_form: tuple[float, ...]
    empirical: tuple[float, ...]
    std_errors: tuple[float, ...]
    empirical_max_discrepancy: float
    max_z_score: float
    num_agents: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "closed_form_intercept": self.closed_form_intercept,
            "closed_form_drift": self.closed_form_drift,
            "closed_form_vol": self.closed_form_vol,
            "eta": self.eta,
            "times": list(self.times),
            "closed_form": list(self.closed_form),
            "empirical": list(self.empirical),
            "std_errors": list(self.std_errors),
            "empirical_max_discrepancy": self.empirical_max_discrepancy,
            "max_z_score": self.max_z_score,
            "num_agents": self.num_agents,
            "passed": self.passed,
        }


# ---------------------------------------------------------------- sampling


def _unpack(agents: Sequence[tuple[AgentType, float]]):
    if len(agents) == 0:
        raise DomainError("need at least one agent")
    types = [a for a, _ in agents]
    pi = np.array([float(s) for _, s in agents])
    if not np.all(np.isfinite(pi)):
        raise DomainError("strategies must be finite")
    cols = np.array([(a.x0, a.mu, a.nu, a.sigma) for a in types]).T
    return cols[0], cols[1], cols[2], cols[3], pi


def _common_noise(config: SimConfig, n: int, paths: np.ndarray, shared: bool, draw: int = 0) -> np.ndarray:
    if shared:
        return rng.normals(config.seed, rng.Role.COMMON, [0], paths, draw)
    return rng.normals(config.seed, rng.Role.COMMON_PER_AGENT, np.arange(n), paths, draw)


def _first_bad_path(bad: np.ndarray) -> int:
    # paths sit on the second-to-last axis for both terminal and gridded output
    per_path = bad.any(axis=-1)
    if per_path.ndim == 2:
        per_path = per_path.any(axis=0)
    return int(np.flatnonzero(per_path)[0])


def _check_finite(values: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericError(f"{what} overflowed on path {_first_bad_path(bad)}")


def _terminal_gain(kind: ModelKind, agents, config: SimConfig, shared: bool):
    """Initial wealth and the terminal gain: additive for CARA, log-return for CRRA."""
    x0, mu, nu, sigma, pi = _unpack(agents)
    if kind is ModelKind.CRRA and np.any(x0 <= 0):
        raise DomainError("x0>0 is required under CRRA")
    n = pi.shape[0]
    T = config.horizon
    paths = np.arange(config.num_paths, dtype=np.uint64)
    root_t = math.sqrt(T)
    W = rng.normals(config.seed, rng.Role.IDIOSYNCRATIC, np.arange(n), paths) * root_t
    B = _common_noise(config, n, paths, shared) * root_t
    with np.errstate(over="ignore", invalid="ignore"):
        if kind is ModelKind.CARA:
            gain = pi * (mu * T + nu * W + sigma * B)
        else:
            gain = (mu * pi - 0.5 * (sigma**2 + nu**2) * pi**2) * T + pi * nu * W + pi * sigma * B
    _check_finite(gain, "terminal wealth")
    return x0, gain


def _terminal_exponent(kind: ModelKind, agents, config: SimConfig, shared: bool) -> np.ndarray:
    """CARA: terminal wealth. CRRA: terminal log wealth."""
    x0, gain = _terminal_gain(kind, agents, config, shared)
    return x0 + gain if kind is ModelKind.CARA else np.log(x0) + gain


def _exp_wealth(x0: np.ndarray, gain: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", under="ignore"):
        x = x0 * np.exp(gain)
    bad = ~np.isfinite(x) | (x <= 0)
    if np.any(bad):
        raise NumericError(f"CRRA wealth left (0, inf) on path {_first_bad_path(bad)}")
    return x


def simulate_terminal(
    kind: ModelKind,
    agents: Sequence[tuple[AgentType, float]],
    config: SimConfig,
    shared_common_noise: bool = True,
) -> np.ndarray:
    """Exact draws of terminal wealth, shape ``(num_paths, n_agents)``.

    Each agent gets its own idiosyncratic stream. The common noise is one
    stream shared by every agent in a path when ``shared_common_noise`` is
    true, and independent per agent otherwise.
    """
    kind = ModelKind.parse(kind)
    x0, gain = _terminal_gain(kind, agents, config, shared_common_noise)
    return x0 + gain if kind is ModelKind.CARA else _exp_wealth(x0, gain)


def simulate_paths(
    kind: ModelKind,
    agents: Sequence[tuple[AgentType, float]],
    config: SimConfig,
    shared_common_noise: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Wealth on the grid ``t_j = j T / time_steps``.

    Returns
    -------
    times : ndarray, shape ``(time_steps + 1,)``
    wealth : ndarray, shape ``(time_steps + 1, num_paths, n_agents)``
        Built from exact Gaussian increments, so each grid point has the
        exact marginal law. Increments use their own draws, so the final
        row is not the same sample as :func:`simulate_terminal`.
    """
    kind = ModelKind.parse(kind)
    x0, mu, nu, sigma, pi = _unpack(agents)
    if kind is ModelKind.CRRA and np.any(x0 <= 0):
        raise DomainError("x0>0 is required under CRRA")
    n = pi.shape[0]
    steps = int(config.time_steps)
    dt = config.horizon / steps
    root_dt = math.sqrt(dt)
    paths = np.arange(config.num_paths, dtype=np.uint64)
    times = np.linspace(0.0, config.horizon, steps + 1)
    drift = mu * pi * dt if kind is ModelKind.CARA else (mu * pi - 0.5 * (sigma**2 + nu**2) * pi**2) * dt
    gain = np.zeros((paths.shape[0], n))
    out = np.empty((steps + 1, paths.shape[0], n))
    out[0] = 0.0
    for j in range(steps):
        dW = rng.normals(config.seed, rng.Role.IDIOSYNCRATIC, np.arange(n), paths, j + 1) * root_dt
        dB = _common_noise(config, n, paths, shared_common_noise, j + 1) * root_dt
        gain = gain + drift + pi * nu * dW + pi * sigma * dB
        out[j + 1] = gain
    _check_finite(out, "wealth path")
    out = x0 + out if kind is ModelKind.CARA else _exp_wealth(x0, out)
    return times, out


# ---------------------------------------------------------------- closed-form payoffs


def _power_utility_of_gaussian(p: float, m: float, var: float) -> float:
    """``E[U(exp(L))]`` for ``L ~ N(m, var)``; ``p = 1 - 1/delta``, log utility at ``p = 0``."""
    if p == 0.0:
        return m
    try:
        return math.exp(p * m + 0.5 * p * p * var) / p
    except OverflowError:
        raise NumericError("expected utility overflows") from None


def _relative_moments(kind: ModelKind, i: int, p: Population, strategies, horizon: float):
    """Mean and variance of ``X_i - theta mean(X)`` (CARA) or of its log analogue (CRRA)."""
    pi = np.asarray(strategies, dtype=np.float64)
    n = p.n
    if pi.shape != (n,):
        raise DomainError(f"expected {n} strategies, got shape {pi.shape}")
    if not np.all(np.isfinite(pi)):
        raise DomainError("strategies must be finite")
    agent = p.agents[i]
    w = -agent.theta / n * np.ones(n)
    w[i] += 1.0
    T = horizon
    if kind is ModelKind.CARA:
        start = float(np.dot(w, p.x0))
        drift = p.mu * pi
    else:
        if np.any(p.x0 <= 0):
            raise DomainError("x0>0 is required under CRRA")
        start = float(np.dot(w, np.log(p.x0)))
        drift = p.mu * pi - 0.5 * (p.sigma**2 + p.nu**2) * pi**2
    mean = start + float(np.dot(w, drift)) * T
    idio = w * p.nu * pi
    common = float(np.dot(w, p.sigma * pi))
    var = (float(np.dot(idio, idio)) + common * common) * T
    return mean, var


def _cara_utility_of_gaussian(delta: float, m: float, var: float) -> float:
    try:
        return -math.exp(-m / delta + var / (2.0 * delta * delta))
    except OverflowError:
        raise NumericError("expected utility overflows") from None


def exact_payoff(kind: ModelKind, i: int, p: Population, strategies, horizon: float) -> float:
    """Expected utility of agent ``i`` from the Gaussian law of its relative wealth.

    CARA returns ``-exp(-m/delta + s^2/(2 delta^2))`` for the mean ``m`` and
    variance ``s^2`` of ``X_i - theta_i mean(X)``. CRRA uses the log of
    ``X_i / geomean(X)^theta_i`` and returns ``exp(p m + p^2 s^2/2)/p``
    with ``p = 1 - 1/delta_i``, or ``m`` when ``delta_i == 1``.
    """
    kind = ModelKind.parse(kind)
    agent = p.agents[i]
    m, var = _relative_moments(kind, i, p, strategies, horizon)
    if kind is ModelKind.CARA:
        return _cara_utility_of_gaussian(agent.delta, m, var)
    return _power_utility_of_gaussian(1.0 - 1.0 / agent.delta, m, var)


def _mf_moments(kind: ModelKind, agent: AgentType, pi: float, d: TypeDistribution, strategies, horizon: float):
    star = np.asarray(strategies, dtype=np.float64)
    T = horizon
    s = d.mean(d.sigma * star)
    if kind is ModelKind.CARA:
        start = agent.x0 - agent.theta * d.mean(d.x0)
        drift = agent.mu * pi - agent.theta * d.mean(d.mu * star)
    else:
        start = math.log(agent.x0) - agent.theta * d.mean(np.log(d.x0))
        own = agent.mu * pi - 0.5 * agent.total_var * pi * pi
        pop = d.mean(d.mu * star) - 0.5 * d.mean((d.sigma**2 + d.nu**2) * star**2)
        drift = own - agent.theta * pop
    mean = start + drift * T
    var = ((agent.nu * pi) ** 2 + (agent.sigma * pi - agent.theta * s) ** 2) * T
    return mean, var


def mf_exact_payoff(
    kind: ModelKind, atom: int, d: TypeDistribution, strategies, pi: float, horizon: float
) -> float:
    """Payoff of a type-``atom`` agent playing ``pi`` against the aggregate that ``strategies`` induce."""
    kind = ModelKind.parse(kind)
    agent = d.agents[atom]
    m, var = _mf_moments(kind, agent, pi, d, strategies, horizon)
    if kind is ModelKind.CARA:
        return _cara_utility_of_gaussian(agent.delta, m, var)
    return _power_utility_of_gaussian(1.0 - 1.0 / agent.delta, m, var)


# ---------------------------------------------------------------- Monte Carlo


def _signed_exp_mean(a: np.ndarray, sign: float) -> tuple[float, float]:
    """Mean and standard error of ``sign * exp(a)`` with a max shift."""
    top = float(np.max(a))
    e = np.exp(a - top)
    n = a.shape[0]
    scale = math.exp(top)
    mean = sign * scale * float(np.mean(e))
    se = scale * float(np.std(e, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    if not (math.isfinite(mean) and math.isfinite(se)):
        raise NumericError("payoff accumulation overflowed")
    return mean, se


def mc_payoff(kind: ModelKind, i: int, p: Population, strategies, config: SimConfig) -> PayoffEstimate:
    """Monte Carlo estimate of agent ``i``'s expected utility with shared common noise."""
    kind = ModelKind.parse(kind)
    agent = p.agents[i]
    pi = np.asarray(strategies, dtype=np.float64)
    if pi.shape != (p.n,):
        raise DomainError(f"expected {p.n} strategies, got shape {pi.shape}")
    values = _terminal_exponent(kind, list(zip(p.agents, pi)), config, True)
    rel = values[:, i] - agent.theta * np.mean(values, axis=1)
    n = config.num_paths
    if kind is ModelKind.CARA:
        mean, se = _signed_exp_mean(-rel / agent.delta, -1.0)
        ce = -agent.delta * math.log(-mean)
    elif agent.delta == 1.0:
        mean = float(np.mean(rel))
        se = float(np.std(rel, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        ce = math.exp(mean)
    else:
        q = 1.0 - 1.0 / agent.delta
        mean, se = _signed_exp_mean(q * rel, 1.0)
        mean /= q
        se /= abs(q)
        ce = (q * mean) ** (1.0 / q)
    return PayoffEstimate(mean, se, n, ce)


# ---------------------------------------------------------------- best responses


def golden_section_max(
    f: Callable[[float], float] | None,
    lo: float,
    hi: float,
    tol: float = DEFAULT_TOL,
    gap: Callable[[float, float], float] | None = None,
    max_iter: int = 500,
) -> float:
    """Maximize a unimodal function on ``[lo, hi]``.

    Parameters
    ----------
    f : callable or None
        Objective. Ignored when ``gap`` is given.
    lo, hi : float
        Bracket, ``lo < hi``.
    tol : float
        Stop once the bracket is narrower than ``tol * max(1, |midpoint|)``.
    gap : callable, optional
        ``gap(a, b) = f(a) - f(b)`` computed without cancellation. Near the
        optimum ``f(a)`` and ``f(b)`` agree to many digits, and comparing
        them directly caps the attainable accuracy at about ``sqrt(eps)``.

    Raises
    ------
    BracketError
        When the maximizer sits at the edge of ``[lo, hi]``.
    """
    if not lo < hi:
        raise DomainError(f"bracket needs lo < hi (got [{lo}, {hi}])")
    if gap is None:
        if f is None:
            raise DomainError("golden_section_max needs f or gap")
        gap = lambda a, b: f(a) - f(b)  # noqa: E731
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    e = a + INV_PHI * (b - a)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(0.5 * (a + b))):
            break
        if gap(c, e) > 0:
            b, e = e, c
            c = b - INV_PHI * (b - a)
        else:
            a, c = c, e
            e = a + INV_PHI * (b - a)
    x = 0.5 * (a + b)
    edge = 2.0 * tol * max(1.0, abs(x))
    if x - lo <= edge or hi - x <= edge:
        raise BracketError(f"maximum at the edge of [{lo}, {hi}]", (lo, hi), x)
    return x


def _quadratic_gap(kind: ModelKind, agent: AgentType, g: float, b0: float, horizon: float):
    """``h(a) - h(b)`` for the monotone payoff transform ``h`` of a deviation.

    ``g`` scales the agent's own loading in the benchmark (``1 - theta/n``,
    or ``1`` in the mean field) and ``b0`` is the rest of the common-noise
    loading of the relative wealth.
    """
    mu, nu2, sg, big = agent.mu, agent.nu**2, agent.sigma, agent.total_var
    T = horizon
    if kind is ModelKind.CARA:
        inv_d = 1.0 / agent.delta

        def gap(a: float, b: float) -> float:
            s = a + b
            quad = g * g * nu2 * s + g * sg * (2.0 * b0 + g * sg * s)
            return (a - b) * T * (g * mu * inv_d - 0.5 * inv_d * inv_d * quad)

        return gap
    p = 1.0 - 1.0 / agent.delta

    def gap(a: float, b: float) -> float:
        s = a + b
        quad = g * g * nu2 * s + g * sg * (2.0 * b0 + g * sg * s)
        return (a - b) * T * (g * mu - 0.5 * g * big * s + 0.5 * p * quad)

    return gap


def _search(gap, center: float, bracket, tol: float) -> float:
    if bracket is not None:
        return golden_section_max(None, bracket[0], bracket[1], tol, gap)
    half = 10.0 * abs(center) + 10.0
    for attempt in range(4):
        try:
            return golden_section_max(None, center - half, center + half, tol, gap)
        except BracketError:
            if attempt == 3:
                raise
            half *= 10.0
    raise AssertionError("unreachable")


def best_response(
    kind: ModelKind,
    i: int,
    p: Population,
    strategies,
    horizon: float,
    bracket: tuple[float, float] | None = None,
    tol: float = DEFAULT_TOL,
) -> float:
    """Payoff-maximizing constant allocation for agent ``i`` against fixed others.

    The search maximizes a strictly increasing transform of
    :func:`exact_payoff` (its log certainty equivalent), so the argmax is
    the same. ``strategies[i]`` only centers the default bracket
    ``[c - 10|c| - 10, c + 10|c| + 10]``, which widens tenfold up to three
    times on :class:`BracketError`.
    """
    kind = ModelKind.parse(kind)
    pi = np.asarray(strategies, dtype=np.float64)
    if pi.shape != (p.n,):
        raise DomainError(f"expected {p.n} strategies, got shape {pi.shape}")
    agent = p.agents[i]
    n = p.n
    others = float(np.dot(np.delete(p.sigma, i), np.delete(pi, i)))
    b0 = -agent.theta / n * others
    gap = _quadratic_gap(kind, agent, 1.0 - agent.theta / n, b0, horizon)
    return _search(gap, float(pi[i]), bracket, tol)


def mf_best_response(
    kind: ModelKind,
    atom: int,
    d: TypeDistribution,
    strategies,
    horizon: float,
    bracket: tuple[float, float] | None = None,
    tol: float = DEFAULT_TOL,
) -> float:
    """Best constant allocation of a type-``atom`` agent against the aggregate ``strategies`` induce."""
    kind = ModelKind.parse(kind)
    star = np.asarray(strategies, dtype=np.float64)
    agent = d.agents[atom]
    s = d.mean(d.sigma * star)
    gap = _quadratic_gap(kind, agent, 1.0, -agent.theta * s, horizon)
    return _search(gap, float(star[atom]), bracket, tol)


# ---------------------------------------------------------------- consistency


def _closed_form_aggregate(kind: ModelKind, d: TypeDistribution, star: np.ndarray):
    s = d.mean(d.sigma * star)
    m_bar = d.mean(d.mu * star)
    if kind is ModelKind.CARA:
        return d.mean(d.x0), m_bar, s, m_bar
    q_bar = d.mean((d.sigma**2 + d.nu**2) * star**2)
    drift = m_bar - 0.5 * q_bar
    return d.mean(np.log(d.x0)), drift, s, drift + 0.5 * s * s


def mfe_consistency_check(
    kind: ModelKind,
    d: TypeDistribution,
    mfe: EquilibriumResult,
    config: SimConfig,
    sigmas: float = 4.0,
) -> ConsistencyReport:
    """Compare the closed-form conditional aggregate with a simulated population.

    ``config.num_agents_sampled`` agents get types drawn from ``d``, their
    own idiosyncratic noise, and one shared common-noise path on the grid
    ``t_j = j T / time_steps``. Their average (arithmetic wealth for CARA,
    log wealth for CRRA) is compared with the closed form at every grid
    point. The check passes when each discrepancy is within ``sigmas``
    cross-agent standard errors. A ``1e-12`` relative slack covers rounding
    when all agents coincide.
    """
    kind = ModelKind.parse(kind)
    if mfe.setting is not Setting.MEAN_FIELD or mfe.kind is not kind:
        raise DomainError("mfe must be a mean-field result of the same model kind")
    if mfe.agents != d.agents:
        raise DomainError("mfe was not solved on this distribution")
    star = np.asarray(mfe.strategies)
    intercept, drift, vol, eta = _closed_form_aggregate(kind, d, star)

    N = int(config.num_agents_sampled)
    idx = d.sample_indices(N, rng.derive_seed(config.seed, rng.Role.TYPE))
    x0, mu, nu, sigma = d.x0[idx], d.mu[idx], d.nu[idx], d.sigma[idx]
    pi = star[idx]
    agent_ids = np.arange(N, dtype=np.uint64)
    steps = int(config.time_steps)
    dt = config.horizon / steps
    root_dt = math.sqrt(dt)
    if kind is ModelKind.CARA:
        state = x0.copy()
        step_drift = mu * pi * dt
    else:
        state = np.log(x0)
        step_drift = (mu * pi - 0.5 * (sigma**2 + nu**2) * pi**2) * dt

    B = 0.0
    times, closed, empirical, errors = [], [], [], []
    worst, worst_z, passed = 0.0, 0.0, True
    for j in range(steps):
        # agents sit on the path axis of a single idiosyncratic stream
        dW = rng.normals(config.seed, rng.Role.IDIOSYNCRATIC, [0], agent_ids, j + 1)[:, 0] * root_dt
        dB = float(rng.normals(config.seed, rng.Role.COMMON, [0], [0], j + 1)[0, 0]) * root_dt
        B += dB
        state = state + step_drift + pi * nu * dW + pi * sigma * dB
        t = (j + 1) * dt
        cf = intercept + drift * t + vol * B
        emp = float(np.mean(state))
        se = float(np.std(state, ddof=1)) / math.sqrt(N) if N > 1 else 0.0
        if not (math.isfinite(emp) and math.isfinite(se)):
            raise NumericError(f"population average overflowed at step {j + 1}")
        disc = abs(emp - cf)
        slack = 1e-12 * max(1.0, abs(cf), float(np.max(np.abs(state))))
        ok = disc <= sigmas * se + slack
        passed = passed and ok
        z = disc / se if se > 0 else (0.0 if disc <= slack else math.inf)
        worst = max(worst, disc)
        worst_z = max(worst_z, z)
        times.append(t)
        closed.append(cf)
        empirical.append(emp)
        errors.append(se)

    return ConsistencyReport(
        closed_form_intercept=intercept,
        closed_form_drift=drift,
        closed_form_vol=vol,
        eta=eta,
        times=tuple(times),
        closed_form=tuple(closed),
        empirical=tuple(empirical),
        std_errors=tuple(errors),
        empirical_max_discrepancy=worst,
        max_z_score=worst_z,
        num_agents=N,
        passed=passed,
    )
