"""Equilibria of CARA and CRRA portfolio games with relative performance concerns.

Closed-form constant Nash equilibria for n agents, constant mean-field
equilibria, and numerical oracles that check them: exact payoffs,
best-response search, Monte Carlo and consistency simulation, and
n-to-infinity convergence studies.
"""

from relperf.equilibria import (
    AggregateMoments,
    Aggregates,
    CompetitionProfile,
    EquilibriumResult,
    ExponentSetting,
    Setting,
    ValueExponent,
    best_response_formula,
    cara_aggregates_mf,
    cara_aggregates_n,
    cara_mf_rho,
    cara_mf_tilde_constants,
    cara_mfe,
    competition_profile,
    crra_aggregates_mf,
    crra_aggregates_n,
    crra_mfe,
    fixed_point_oracle,
    master_value,
    mean_field_moments,
    mean_field_value,
    nash_moments,
    nash_value,
    solve,
    solve_cara_nash,
    solve_crra_nash,
    value_exponent,
)
from relperf.errors import BracketError, Divergent, DomainError, NoEquilibrium, NumericError
from relperf.model import (
    AgentType,
    ModelKind,
    Population,
    SingleStockSpec,
    TypeDistribution,
    empirical_distribution,
    expect,
    reparam_exclude_self,
    validate_type,
)
from relperf.rng import BACKEND

__version__ = "0.1.0"

__all__ = [
    "AgentType",
    "AggregateMoments",
    "Aggregates",
    "BACKEND",
    "BracketError",
    "CompetitionProfile",
    "Divergent",
    "DomainError",
    "EquilibriumResult",
    "ExponentSetting",
    "ModelKind",
    "NoEquilibrium",
    "NumericError",
    "Population",
    "Setting",
    "SingleStockSpec",
    "TypeDistribution",
    "ValueExponent",
    "best_response_formula",
    "cara_aggregates_mf",
    "cara_aggregates_n",
    "cara_mf_rho",
    "cara_mf_tilde_constants",
    "cara_mfe",
    "competition_profile",
    "crra_aggregates_mf",
    "crra_aggregates_n",
    "crra_mfe",
    "empirical_distribution",
    "expect",
    "fixed_point_oracle",
    "master_value",
    "mean_field_moments",
    "mean_field_value",
    "nash_moments",
    "nash_value",
    "reparam_exclude_self",
    "solve",
    "solve_cara_nash",
    "solve_crra_nash",
    "validate_type",
    "value_exponent",
]
