"""Constant Nash and mean-field equilibria for CARA and CRRA relative-performance games.

Every solver reduces to the same scalar structure. Given the aggregate
volatility ``s`` (the average of ``sigma_k * pi_k``), each agent's best response
is affine in ``s``::

    pi = a + b * s

The equilibrium aggregate solves ``s = mean(sigma * a) + mean(sigma * b) * s``.
CARA writes ``phi = mean(sigma a)``, ``psi = mean(sigma b)``; CRRA flips the
sign convention so that ``psi = -mean(sigma b)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from relperf.errors import Divergent, DomainError, NoEquilibrium
from relperf.model import (
    AgentType,
    ModelKind,
    Population,
    TypeDistribution,
    validate_type,
)

NO_EQUILIBRIUM_TOL = 1e-12
ILL_CONDITIONED_TOL = 1e-6


class Setting(enum.Enum):
    NASH = "nash"
    MEAN_FIELD = "mean_field"

    @classmethod
    def parse(cls, value: "Setting | str") -> "Setting":
        if isinstance(value, cls):
            return value
        aliases = {"nash": cls.NASH, "n_agent": cls.NASH, "nagent": cls.NASH, "mean_field": cls.MEAN_FIELD, "mfg": cls.MEAN_FIELD}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise DomainError(f"unknown setting {value!r}; expected 'nash' or 'mean_field'") from None


@dataclass(frozen=True)
class Aggregates:
    """Population constants of the aggregate equation.

    ``aggregate_vol`` is ``phi / (1 - psi)`` (CARA) or ``phi / (1 + psi)``
    (CRRA), and ``None`` when no equilibrium exists.
    """

    phi: float
    psi: float
    aggregate_vol: float | None

    def to_dict(self) -> dict:
        return {"phi": self.phi, "psi": self.psi, "aggregate_vol": self.aggregate_vol}


@dataclass(frozen=True)
class AggregateMoments:
    """Strategy moments of the benchmark seen by one agent.

    In the n-agent game these are sums over the *other* agents divided by
    ``n``; in the mean-field game they are population expectations and
    ``idio_var`` is zero.

    Attributes
    ----------
    mu_alpha : float
        Drift contribution, ``(1/n) sum_{k != i} mu_k a_k``.
    sigma_alpha : float
        Common-noise loading, ``(1/n) sum_{k != i} sigma_k a_k``.
    total_var_alpha : float
        ``(1/n) sum_{k != i} (sigma_k^2 + nu_k^2) a_k^2``.
    idio_var : float
        ``(1/n^2) sum_{k != i} nu_k^2 a_k^2``, the idiosyncratic variance
        left in the benchmark.
    n : int or None
        Number of agents, ``None`` for the mean-field limit.
    """

    mu_alpha: float
    sigma_alpha: float
    total_var_alpha: float
    idio_var: float
    n: int | None

    @property
    def eta(self) -> float:
        """Drift of the log geometric benchmark."""
        return self.mu_alpha - 0.5 * (self.total_var_alpha - self.sigma_alpha**2 - self.idio_var)

    def to_dict(self) -> dict:
        return {
            "mu_alpha": self.mu_alpha,
            "sigma_alpha": self.sigma_alpha,
            "total_var_alpha": self.total_var_alpha,
            "idio_var": self.idio_var,
            "eta": self.eta,
        }


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    """Solved strategies plus the aggregates that produced them.

    ``strategies[i]`` is agent ``i``'s constant allocation (n-agent) or the
    allocation of atom ``i`` (mean field). CARA allocations are amounts,
    CRRA allocations are fractions of wealth.
    """

    strategies: np.ndarray
    aggregates: Aggregates
    kind: ModelKind
    setting: Setting
    agents: tuple[AgentType, ...]
    weights: np.ndarray
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        for name in ("strategies", "weights"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int | None:
        return len(self.agents) if self.setting is Setting.NASH else None

    @property
    def merton(self) -> np.ndarray:
        """No-competition allocations ``delta mu / (sigma^2 + nu^2)``."""
        return np.array([a.delta * a.mu / a.total_var for a in self.agents])

    @property
    def competitive(self) -> np.ndarray:
        """Part of each allocation caused by competition."""
        return self.strategies - self.merton

    def moments(self, i: int | None = None) -> AggregateMoments:
        """Benchmark moments for agent ``i`` (n-agent) or the population (mean field)."""
        if self.setting is Setting.NASH:
            if i is None:
                raise DomainError("n-agent moments need an agent index")
            return nash_moments(Population(self.agents), self.strategies, i)
        return mean_field_moments(TypeDistribution(self.agents, self.weights), self.strategies)

    def to_dict(self) -> dict:
        out = {
            "model": self.kind.value,
            "setting": self.setting.value,
            "strategies": self.strategies.tolist(),
            "merton": self.merton.tolist(),
            "aggregates": self.aggregates.to_dict(),
            "warnings": list(self.warnings),
        }
        if self.setting is Setting.MEAN_FIELD:
            out["weights"] = self.weights.tolist()
        return out


def _columns(agents: Sequence[AgentType]):
    arr = np.array([(a.delta, a.theta, a.mu, a.nu, a.sigma) for a in agents], dtype=np.float64)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]


def _affine_terms(kind: ModelKind, agents: Sequence[AgentType], n: int | None):
    """Per-agent ``(a, b)`` with best response ``a + b s``."""
    delta, theta, mu, nu, sigma = _columns(agents)
    if n is None:
        corr = np.ones_like(theta)
    elif kind is ModelKind.CARA:
        corr = 1.0 - theta / n
    else:
        corr = 1.0 + (delta - 1.0) * theta / n
    denom = sigma * sigma + nu * nu * corr
    if np.any(denom <= 0):
        i = int(np.flatnonzero(denom <= 0)[0])
        raise DomainError(
            f"agent {i}: sigma^2 + nu^2 (1 - theta/n) vanishes (lone agent with theta=1 and sigma=0)"
        )
    a = delta * mu / denom
    if kind is ModelKind.CARA:
        b = theta * sigma / denom
    else:
        b = -theta * (delta - 1.0) * sigma / denom
    return a, b, sigma


def _aggregates(kind: ModelKind, agents, weights: np.ndarray, n: int | None):
    a, b, sigma = _affine_terms(kind, agents, n)
    phi = float(np.dot(weights, sigma * a))
    slope = float(np.dot(weights, sigma * b))
    psi = slope if kind is ModelKind.CARA else -slope
    gap = 1.0 - slope
    return a, b, phi, psi, gap


def _aggregate_vol(phi: float, gap: float) -> float | None:
    return phi / gap if abs(gap) > NO_EQUILIBRIUM_TOL else None


def cara_aggregates_n(p: Population) -> Aggregates:
    """``phi_n, psi_n`` of the n-agent CARA game."""
    p.validate(ModelKind.CARA)
    _, _, phi, psi, gap = _aggregates(ModelKind.CARA, p.agents, np.full(p.n, 1.0 / p.n), p.n)
    return Aggregates(phi, psi, _aggregate_vol(phi, gap))


def crra_aggregates_n(p: Population) -> Aggregates:
    """``phi_n, psi_n`` of the n-agent CRRA game."""
    p.validate(ModelKind.CRRA)
    _, _, phi, psi, gap = _aggregates(ModelKind.CRRA, p.agents, np.full(p.n, 1.0 / p.n), p.n)
    return Aggregates(phi, psi, _aggregate_vol(phi, gap))


def cara_aggregates_mf(d: TypeDistribution) -> Aggregates:
    d.validate(ModelKind.CARA)
    _, _, phi, psi, gap = _aggregates(ModelKind.CARA, d.agents, d.weights, None)
    return Aggregates(phi, psi, _aggregate_vol(phi, gap))


def crra_aggregates_mf(d: TypeDistribution) -> Aggregates:
    d.validate(ModelKind.CRRA)
    _, _, phi, psi, gap = _aggregates(ModelKind.CRRA, d.agents, d.weights, None)
    return Aggregates(phi, psi, _aggregate_vol(phi, gap))


def _solve(kind: ModelKind, agents, weights, n: int | None, setting: Setting) -> EquilibriumResult:
    a, b, phi, psi, gap = _aggregates(kind, agents, weights, n)
    if abs(gap) <= NO_EQUILIBRIUM_TOL:
        raise NoEquilibrium(
            f"no constant equilibrium: psi = {psi!r} (need psi < 1 for CARA)", phi=phi, psi=psi
        )
    warnings: list[str] = []
    if abs(gap) < ILL_CONDITIONED_TOL:
        warnings.append(f"ill-conditioned aggregate equation: condition number 1/|1-psi| = {1.0 / abs(gap):.6g}")
    s = phi / gap
    strategies = a + b * s
    return EquilibriumResult(
        strategies=strategies,
        aggregates=Aggregates(phi, psi, s),
        kind=kind,
        setting=setting,
        agents=tuple(agents),
        weights=weights,
        warnings=tuple(warnings),
    )


def solve_cara_nash(p: Population) -> EquilibriumResult:
    """Unique constant Nash equilibrium of the n-agent CARA game.

    Raises
    ------
    NoEquilibrium
        When ``|1 - psi_n| <= 1e-12``.
    """
    p.validate(ModelKind.CARA)
    return _solve(ModelKind.CARA, p.agents, np.full(p.n, 1.0 / p.n), p.n, Setting.NASH)


def solve_crra_nash(p: Population) -> EquilibriumResult:
    """Unique constant Nash equilibrium of the n-agent CRRA game (always exists)."""
    p.validate(ModelKind.CRRA)
    return _solve(ModelKind.CRRA, p.agents, np.full(p.n, 1.0 / p.n), p.n, Setting.NASH)


def cara_mfe(d: TypeDistribution) -> EquilibriumResult:
    """Constant mean-field equilibrium of the CARA game, one allocation per atom."""
    d.validate(ModelKind.CARA)
    return _solve(ModelKind.CARA, d.agents, d.weights, None, Setting.MEAN_FIELD)


def crra_mfe(d: TypeDistribution) -> EquilibriumResult:
    """Constant mean-field equilibrium of the CRRA game, one allocation per atom."""
    d.validate(ModelKind.CRRA)
    return _solve(ModelKind.CRRA, d.agents, d.weights, None, Setting.MEAN_FIELD)


def solve(kind: ModelKind | str, source: Population | TypeDistribution) -> EquilibriumResult:
    """Dispatch to the solver matching ``kind`` and the type of ``source``."""
    kind = ModelKind.parse(kind)
    if isinstance(source, Population):
        return solve_cara_nash(source) if kind is ModelKind.CARA else solve_crra_nash(source)
    return cara_mfe(source) if kind is ModelKind.CARA else crra_mfe(source)


def best_response_formula(
    kind: ModelKind, agent: AgentType, aggregate_vol: float, n: int | None = None
) -> float:
    """First-order-condition best response to a given aggregate volatility.

    ``aggregate_vol`` is the full average ``(1/n) sum_k sigma_k pi_k``
    including the responding agent; the ``1/n`` self-influence is folded
    into the denominator. ``n=None`` gives the mean-field response.
    """
    kind = ModelKind.parse(kind)
    d, th, mu, nu, sg = agent.delta, agent.theta, agent.mu, agent.nu, agent.sigma
    if kind is ModelKind.CARA:
        corr = 1.0 if n is None else 1.0 - th / n
        return (d * mu + th * sg * aggregate_vol) / (sg * sg + nu * nu * corr)
    corr = 1.0 if n is None else 1.0 + (d - 1.0) * th / n
    return (d * mu - th * (d - 1.0) * sg * aggregate_vol) / (sg * sg + nu * nu * corr)


# ---------------------------------------------------------------- value exponents


class ExponentSetting(enum.Enum):
    CARA_N = "cara_n"
    CARA_MF = "cara_mf"
    CRRA_N_POWER = "crra_n_power"
    CRRA_N_LOG = "crra_n_log"
    CRRA_MF_POWER = "crra_mf_power"
    CRRA_MF_LOG = "crra_mf_log"

    @staticmethod
    def infer(kind: ModelKind, agent: AgentType, mean_field: bool) -> "ExponentSetting":
        if kind is ModelKind.CARA:
            return ExponentSetting.CARA_MF if mean_field else ExponentSetting.CARA_N
        log = agent.delta == 1.0
        if mean_field:
            return ExponentSetting.CRRA_MF_LOG if log else ExponentSetting.CRRA_MF_POWER
        return ExponentSetting.CRRA_N_LOG if log else ExponentSetting.CRRA_N_POWER


@dataclass(frozen=True)
class ValueExponent:
    """Growth constant ``rho`` of the separable value function."""

    rho: float
    setting: ExponentSetting


def nash_moments(p: Population, strategies, i: int) -> AggregateMoments:
    """Benchmark moments seen by agent ``i`` when the others play ``strategies``."""
    n = p.n
    if not 0 <= i < n:
        raise DomainError(f"agent index {i} out of range for n={n}")
    pi = np.asarray(strategies, dtype=np.float64)
    mask = np.ones(n, dtype=bool)
    mask[i] = False
    mu, nu, sigma, a = p.mu[mask], p.nu[mask], p.sigma[mask], pi[mask]
    return AggregateMoments(
        mu_alpha=float(np.sum(mu * a)) / n,
        sigma_alpha=float(np.sum(sigma * a)) / n,
        total_var_alpha=float(np.sum((sigma * sigma + nu * nu) * a * a)) / n,
        idio_var=float(np.sum((nu * a) ** 2)) / (n * n),
        n=n,
    )


def mean_field_moments(d: TypeDistribution, strategies) -> AggregateMoments:
    """Population moments of a mean-field strategy profile."""
    pi = np.asarray(strategies, dtype=np.float64)
    return AggregateMoments(
        mu_alpha=d.mean(d.mu * pi),
        sigma_alpha=d.mean(d.sigma * pi),
        total_var_alpha=d.mean((d.sigma**2 + d.nu**2) * pi * pi),
        idio_var=0.0,
        n=None,
    )


_LOG_SETTINGS = {ExponentSetting.CRRA_N_LOG, ExponentSetting.CRRA_MF_LOG}
_MF_SETTINGS = {ExponentSetting.CARA_MF, ExponentSetting.CRRA_MF_POWER, ExponentSetting.CRRA_MF_LOG}


def value_exponent(
    kind: ModelKind,
    setting: ExponentSetting | None,
    agent: AgentType,
    moments: AggregateMoments,
) -> ValueExponent:
    """Value-function growth constant for ``agent`` facing benchmark ``moments``.

    Parameters
    ----------
    kind : ModelKind
    setting : ExponentSetting or None
        Requested formula. ``None`` infers it from ``kind``, ``moments.n``
        and whether ``agent.delta == 1``.
    agent : AgentType
    moments : AggregateMoments
        From :func:`nash_moments` or :func:`mean_field_moments`.

    Returns
    -------
    ValueExponent
        CARA values are ``-exp(-(g x - theta y)/delta - rho (T-t))``. CRRA
        power values are ``U(x^g y^-theta) exp((1-1/delta) rho (T-t))``, and
        the log branch adds ``rho (T-t)``. Here ``g = 1 - theta/n`` (``1`` in
        the mean-field limit).
    """
    kind = ModelKind.parse(kind)
    mean_field = moments.n is None
    inferred = ExponentSetting.infer(kind, agent, mean_field)
    if setting is None:
        setting = inferred
    elif setting is not inferred:
        if (setting in _LOG_SETTINGS) != (inferred in _LOG_SETTINGS) and kind is ModelKind.CRRA:
            raise DomainError(f"branch {setting.value} does not match delta={agent.delta}; the log branch is exactly delta == 1")
        raise DomainError(f"setting {setting.value} does not match {kind.value} with {'mean-field' if mean_field else 'n-agent'} moments")

    d, th, mu, sg = agent.delta, agent.theta, agent.mu, agent.sigma
    big_sigma = agent.total_var
    s = moments.sigma_alpha
    common = s * s + moments.idio_var
    g = 1.0 if mean_field else 1.0 - th / moments.n

    if kind is ModelKind.CARA:
        k = th / d
        rho = (mu + k * sg * s) ** 2 / (2.0 * big_sigma) - k * moments.mu_alpha - 0.5 * k * k * common
    elif setting in _LOG_SETTINGS:
        rho = g * mu * mu / (2.0 * big_sigma) - th * moments.eta + 0.5 * th * common
    else:
        p = 1.0 - 1.0 / d
        lead = (g * mu - sg * s * th * g * p) ** 2 / (2.0 * big_sigma * g * (1.0 - g * p))
        rho = lead - moments.eta * th + 0.5 * common * th * (1.0 + th * p)
    if not math.isfinite(rho):
        raise DomainError(f"value exponent is not finite for agent {agent}")
    return ValueExponent(float(rho), setting)


def cara_mf_tilde_constants(d: TypeDistribution) -> tuple[float, float]:
    """``(phi_tilde, psi_tilde) = (E[theta mu sigma / Sigma], E[delta mu^2 / Sigma])``.

    The pairing is unusual (``psi_tilde`` carries the risk tolerance) but it
    makes ``E[mu pi*] = psi_tilde + phi_tilde * s`` for aggregate volatility ``s``.
    """
    big_sigma = d.sigma**2 + d.nu**2
    phi_t = d.mean(d.theta * d.mu * d.sigma / big_sigma)
    psi_t = d.mean(d.delta * d.mu**2 / big_sigma)
    return phi_t, psi_t


def cara_mf_rho(agent: AgentType, d: TypeDistribution) -> float:
    """CARA mean-field ``rho`` written through the tilde constants.

    Includes the ``-(theta s / delta)^2 / 2`` variance penalty of the
    benchmark, so it equals :func:`value_exponent` on the mean-field
    equilibrium moments.
    """
    agg = cara_aggregates_mf(d)
    if agg.aggregate_vol is None:
        raise NoEquilibrium("no constant mean-field equilibrium", phi=agg.phi, psi=agg.psi)
    s = agg.aggregate_vol
    phi_t, psi_t = cara_mf_tilde_constants(d)
    k = agent.theta / agent.delta
    return (
        (agent.mu + k * s * agent.sigma) ** 2 / (2.0 * agent.total_var)
        - k * (psi_t + phi_t * s)
        - 0.5 * (k * s) ** 2
    )


def nash_value(result: EquilibriumResult, i: int, horizon: float) -> float:
    """Time-zero equilibrium value of agent ``i`` from the separable value function."""
    if result.setting is not Setting.NASH:
        raise DomainError("nash_value needs an n-agent result")
    agent = result.agents[i]
    n = len(result.agents)
    rho = value_exponent(result.kind, None, agent, result.moments(i)).rho
    g = 1.0 - agent.theta / n
    x0 = np.array([a.x0 for a in result.agents])
    others = np.delete(x0, i)
    if result.kind is ModelKind.CARA:
        y = float(np.sum(others)) / n
        return -math.exp(-(g * agent.x0 - agent.theta * y) / agent.delta - rho * horizon)
    log_y = float(np.sum(np.log(others))) / n
    log_arg = g * math.log(agent.x0) - agent.theta * log_y
    if agent.delta == 1.0:
        return log_arg + rho * horizon
    p = 1.0 - 1.0 / agent.delta
    return math.exp(p * log_arg + p * rho * horizon) / p


def mean_field_value(result: EquilibriumResult, atom: int, horizon: float) -> float:
    """Time-zero value of a representative agent of type ``atom`` in the mean-field equilibrium."""
    if result.setting is not Setting.MEAN_FIELD:
        raise DomainError("mean_field_value needs a mean-field result")
    d = TypeDistribution(result.agents, result.weights)
    agent = result.agents[atom]
    rho = value_exponent(result.kind, None, agent, result.moments()).rho
    if result.kind is ModelKind.CARA:
        z0 = agent.x0 - agent.theta * d.mean(d.x0)
        return -math.exp(-z0 / agent.delta - rho * horizon)
    log_arg = math.log(agent.x0) - agent.theta * d.mean(np.log(d.x0))
    if agent.delta == 1.0:
        return log_arg + rho * horizon
    p = 1.0 - 1.0 / agent.delta
    return math.exp(p * log_arg + p * rho * horizon) / p


def master_value(
    x: float, m_bar: float, t: float, agent: AgentType, rho: ValueExponent | float, horizon: float
) -> float:
    """CARA representative-agent value ``U(x, m, t) = -exp(-(x - theta m)/delta - rho (T - t))``."""
    if not 0.0 <= t <= horizon:
        raise DomainError(f"t must lie in [0, T] = [0, {horizon}] (got {t})")
    r = rho.rho if isinstance(rho, ValueExponent) else float(rho)
    if isinstance(rho, ValueExponent) and rho.setting not in (ExponentSetting.CARA_MF, ExponentSetting.CARA_N):
        raise DomainError("master_value is defined for the CARA model only")
    return -math.exp(-(x - agent.theta * m_bar) / agent.delta - r * (horizon - t))


# ---------------------------------------------------------------- competition profile


@dataclass(frozen=True)
class CompetitionProfile:
    """Single-stock summary of how competition distorts an agent's allocation.

    ``delta_eff`` is the risk tolerance whose Merton portfolio equals the
    equilibrium allocation. ``k`` and ``theta_bar_crit`` are CRRA only;
    ``theta_bar_crit`` is ``None`` unless ``theta * delta_bar > 1`` and
    ``delta_bar != 1``.
    """

    delta_eff: float
    k: float | None = None
    theta_bar_crit: float | None = None

    def to_dict(self) -> dict:
        return {"delta_eff": self.delta_eff, "k": self.k, "theta_bar_crit": self.theta_bar_crit}


def _require_single_stock(agent: AgentType, d: TypeDistribution) -> None:
    for a in (agent, *d.agents):
        if a.nu != 0.0:
            raise DomainError("competition profile needs a single stock: nu = 0 everywhere")
        if a.mu != agent.mu or a.sigma != agent.sigma:
            raise DomainError("competition profile needs a single stock: identical mu and sigma")
    if not agent.sigma > 0:
        raise DomainError("competition profile needs sigma > 0")


def competition_profile(kind: ModelKind, agent: AgentType, d: TypeDistribution) -> CompetitionProfile:
    """Effective risk tolerance of ``agent`` among a population distributed as ``d``."""
    kind = ModelKind.parse(kind)
    validate_type(agent, kind)
    d.validate(kind)
    _require_single_stock(agent, d)
    delta_bar = d.mean(d.delta)
    if kind is ModelKind.CARA:
        theta_bar = d.mean(d.theta)
        if theta_bar >= 1.0:
            raise DomainError(f"CARA competition profile needs mean theta < 1 (got {theta_bar})")
        return CompetitionProfile(agent.delta + agent.theta * delta_bar / (1.0 - theta_bar))
    k = delta_bar / (1.0 + d.mean(d.theta * (d.delta - 1.0)))
    delta_eff = (1.0 - k * agent.theta) * agent.delta + k * agent.theta
    crit = None
    if agent.theta * delta_bar > 1.0 and delta_bar != 1.0:
        crit = (agent.theta * delta_bar - 1.0) / (delta_bar - 1.0)
    return CompetitionProfile(delta_eff, k, crit)


# ---------------------------------------------------------------- fixed-point oracle


def _aggregate_map(kind: ModelKind, source: Population | TypeDistribution):
    if isinstance(source, Population):
        agents, weights, n = source.agents, np.full(source.n, 1.0 / source.n), source.n
    else:
        agents, weights, n = source.agents, source.weights, None
    sigma = np.array([a.sigma for a in agents])

    def response(s: float) -> float:
        pis = np.array([best_response_formula(kind, a, s, n) for a in agents])
        return float(np.dot(weights, sigma * pis))

    return response


def _polish(F, s: float, omega: float, last: float, limit: int = 200) -> float:
    # keep stepping while steps still shrink, so the result sits at the rounding floor
    for _ in range(limit):
        if last == 0.0:
            break
        step = omega * (F(s) - s)
        if abs(step) >= last:
            break
        s, last = s + step, abs(step)
    return s


def fixed_point_oracle(
    kind: ModelKind,
    source: Population | TypeDistribution,
    max_iter: int = 10**6,
    tol: float = 1e-14,
) -> Aggregates:
    """Aggregate volatility by iterating the best-response map from ``s = 0``.

    Each step recomputes every agent's first-order-condition response to the
    current aggregate and averages ``sigma * pi``. No closed-form constant is
    used. The iteration is relaxed as ``s <- (1-w) s + w F(s)``. ``w`` is
    halved and the run restarted when the steps oscillate without
    shrinking, which only happens for CRRA with ``psi > 1``.

    Parameters
    ----------
    kind : ModelKind
    source : Population or TypeDistribution
    max_iter : int
        Total iteration budget across restarts.
    tol : float
        Stop when ``|s_{k+1} - s_k| <= tol * max(1, |s_k|)``.

    Returns
    -------
    Aggregates
        ``phi = F(0)``, ``psi`` read off from ``F(1) - F(0)``, and the limit.

    Raises
    ------
    Divergent
        When the steps stop shrinking without alternating sign (CARA with
        ``psi >= 1``), or the budget runs out.
    """
    kind = ModelKind.parse(kind)
    source.validate(kind)
    F = _aggregate_map(kind, source)
    f0 = F(0.0)
    slope = F(1.0) - f0
    psi = slope if kind is ModelKind.CARA else -slope

    omega = 1.0
    iters = 0
    while True:
        s = 0.0
        prev_step = None
        restart = False
        stall = 0
        while iters < max_iter:
            iters += 1
            step = omega * (F(s) - s)
            s_next = s + step
            if not math.isfinite(s_next):
                raise Divergent(f"aggregate iteration overflowed after {iters} steps", max_iter, s)
            if step == 0.0 or abs(step) <= tol * max(1.0, abs(s)):
                return Aggregates(f0, psi, _polish(F, s_next, omega, abs(step)))
            if prev_step is not None and abs(step) >= abs(prev_step) * (1.0 - NO_EQUILIBRIUM_TOL):
                if (step > 0) != (prev_step > 0):
                    restart = True
                    break
                # same-sign steps that never shrink: the map has slope >= 1
                stall += 1
                if stall >= 64:
                    raise Divergent(
                        f"aggregate iteration is not contracting (psi = {psi!r})", max_iter, s_next
                    )
            else:
                stall = 0
            prev_step = step
            s = s_next
        if not restart:
            raise Divergent(f"no convergence within {max_iter} iterations", max_iter, s)
        omega *= 0.5
        if omega < 2.0**-60:
            raise Divergent("relaxation underflow", max_iter, s)
