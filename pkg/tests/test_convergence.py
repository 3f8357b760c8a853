import numpy as np
import pytest

from helpers import agent
from relperf import DomainError, ModelKind, NoEquilibrium, TypeDistribution
from relperf.convergence import (
    ConvergenceMode,
    convergence_study,
    fit_decay_exponent,
    replicated_counts,
    sample_population,
)

D3 = TypeDistribution.from_pairs(
    [
        (agent(delta=2, theta=0.5, mu=0.1, nu=0.3, sigma=0.2), 0.25),
        (agent(delta=0.7, theta=0.3, mu=0.15, nu=0.2, sigma=0.3), 0.5),
        (agent(delta=1.3, theta=0.8, mu=0.08, nu=0.4, sigma=0.25), 0.25),
    ]
)


def test_replicated_counts():
    assert replicated_counts(np.array([0.25, 0.5, 0.25]), 8).tolist() == [2, 4, 2]
    assert replicated_counts(np.array([1 / 3, 1 / 3, 1 / 3]), 4).tolist() == [2, 1, 1]
    assert replicated_counts(np.array([0.1, 0.9]), 7).sum() == 7


def test_fit_decay_exponent_exact_power_law():
    ns = [10, 100, 1000]
    assert fit_decay_exponent(ns, [3.0 / n**0.5 for n in ns]) == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(DomainError):
        fit_decay_exponent([10], [1.0])


def test_sample_population_is_seeded():
    a = sample_population(D3, 50, 4)
    assert a == sample_population(D3, 50, 4)
    assert a != sample_population(D3, 50, 5)


@pytest.mark.parametrize("kind", [ModelKind.CARA, ModelKind.CRRA])
def test_replicated_type_halves_error(kind):
    table = convergence_study(kind, D3, [8, 16, 32, 64, 128], 1, 0)
    errs = table.max_errors
    ratios = errs[:-1] / errs[1:]
    assert np.all((ratios >= 1.6) & (ratios <= 2.4))
    assert table.to_csv().splitlines()[0] == "mode,n,replication_count,failures,max_abs_error,mean_abs_error"


def test_single_stock_replicated_type_is_exact():
    d = TypeDistribution.from_pairs([(agent(delta=2, theta=0.5, mu=0.3, sigma=0.4), 0.5), (agent(delta=4, theta=0.2, mu=0.3, sigma=0.4), 0.5)])
    for kind in ModelKind:
        assert np.all(convergence_study(kind, d, [2, 4, 8], 1, 0).max_errors <= 1e-12)


@pytest.mark.parametrize("kind", [ModelKind.CARA, ModelKind.CRRA])
def test_iid_sampling_decays_like_root_n(kind):
    table = convergence_study(kind, D3, [100, 1000, 10000], 20, 1, ConvergenceMode.IID_SAMPLED)
    assert 0.3 <= fit_decay_exponent(table.n_values, table.mean_errors) <= 0.7


def test_iid_is_reproducible():
    a = convergence_study(ModelKind.CARA, D3, [10, 20], 5, 3, "iid_sampled")
    b = convergence_study(ModelKind.CARA, D3, [10, 20], 5, 3, "iid_sampled")
    assert a.to_csv() == b.to_csv()


def test_failures_are_counted():
    # a lone theta=1 agent with sigma>0 has no n=1 equilibrium but the mixture does in the mean field
    d = TypeDistribution.from_pairs([(agent(theta=1, nu=0), 0.5), (agent(theta=0, nu=0.5, sigma=0.5), 0.5)])
    table = convergence_study(ModelKind.CARA, d, [1, 2], 20, 0, ConvergenceMode.IID_SAMPLED)
    assert table.rows[0].failures > 0
    assert table.rows[0].replication_count == 20


def test_argument_checks():
    with pytest.raises(DomainError):
        convergence_study(ModelKind.CARA, D3, [16, 8], 1, 0)
    with pytest.raises(DomainError):
        convergence_study(ModelKind.CARA, D3, [8], 0, 0)
    with pytest.raises(DomainError):
        convergence_study(ModelKind.CARA, D3, [8], 1, 0, "bogus")
    with pytest.raises(NoEquilibrium):
        convergence_study(ModelKind.CARA, TypeDistribution.point_mass(agent(theta=1, nu=0)), [8], 1, 0)
