import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import agent
from relperf import (
    AgentType,
    DomainError,
    ModelKind,
    NumericError,
    Population,
    SingleStockSpec,
    TypeDistribution,
    empirical_distribution,
    expect,
    reparam_exclude_self,
    validate_type,
)

CARA, CRRA = ModelKind.CARA, ModelKind.CRRA


class TestValidateType:
    def test_valid_cara_with_zero_wealth(self):
        validate_type(agent(delta=1, theta=0, mu=1, nu=1, sigma=0, x0=0), CARA)

    def test_no_volatility_rejected(self):
        with pytest.raises(DomainError, match=r"sigma\+nu"):
            validate_type(agent(delta=1, theta=0, mu=1, nu=0, sigma=0, x0=1), CARA)

    def test_crra_needs_positive_wealth(self):
        with pytest.raises(DomainError, match=r"x0>0"):
            validate_type(agent(delta=1, theta=0, mu=1, nu=1, sigma=0, x0=0), CRRA)

    @pytest.mark.parametrize(
        "field,value,pattern",
        [
            ("delta", 0.0, "delta"),
            ("theta", -0.1, "theta"),
            ("theta", 1.5, "theta"),
            ("mu", 0.0, "mu"),
            ("nu", -1.0, "nu"),
            ("sigma", -1.0, "sigma"),
            ("delta", math.nan, "delta"),
        ],
    )
    def test_each_constraint_is_named(self, field, value, pattern):
        with pytest.raises(DomainError, match=pattern):
            validate_type(agent(**{field: value}), CARA)

    def test_theta_endpoints_are_legal(self):
        validate_type(agent(theta=0.0), CRRA)
        validate_type(agent(theta=1.0), CRRA)


class TestReparam:
    def test_cara_example(self):
        assert reparam_exclude_self(CARA, 2.0, 1.0, 2) == (1.0, 1.0)

    def test_no_competition_is_identity(self):
        assert reparam_exclude_self(CARA, 3.0, 0.0, 5) == (3.0, 0.0)

    def test_crra_log_example(self):
        delta, theta = reparam_exclude_self(CRRA, 1.0, 0.5, 2)
        assert delta == 1.0
        assert theta == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_crra_validity_condition(self):
        # (1 - 1/10)(1 + 1/1) = 1.8 >= 1
        with pytest.raises(DomainError, match="increase n"):
            reparam_exclude_self(CRRA, 10.0, 1.0, 2)
        # the same preferences are fine in a large population
        delta, theta = reparam_exclude_self(CRRA, 10.0, 1.0, 100)
        assert delta > 0 and 0 <= theta <= 1

    def test_needs_two_agents(self):
        with pytest.raises(DomainError):
            reparam_exclude_self(CARA, 1.0, 0.5, 1)

    @settings(max_examples=200, deadline=None)
    @given(
        st.sampled_from([CARA, CRRA]),
        st.floats(0.05, 20.0),
        st.floats(0.0, 1.0),
        st.integers(2, 500),
    )
    def test_outputs_always_validate(self, kind, dp, tp, n):
        try:
            delta, theta = reparam_exclude_self(kind, dp, tp, n)
        except DomainError:
            assert kind is CRRA and (1 - 1 / dp) * (1 + tp / (n - 1)) >= 1
            return
        validate_type(agent(delta=delta, theta=theta), kind)
        # the include-self weight never exceeds one
        assert theta <= 1.0


class TestDistributions:
    def test_duplicates_merge(self):
        z = agent(delta=2)
        d = empirical_distribution(Population((z, z)))
        assert d.atoms == (z,) and d.weights.tolist() == [1.0]

    def test_distinct_uniform(self):
        z1, z2 = agent(delta=2), agent(delta=3)
        d = empirical_distribution(Population((z1, z2)))
        assert d.pairs() == [(z1, 0.5), (z2, 0.5)]

    def test_counting(self):
        z1, z2 = agent(delta=2), agent(delta=3)
        d = empirical_distribution(Population((z1, z1, z2)))
        assert d.atoms == (z1, z2)
        np.testing.assert_allclose(d.weights, [2 / 3, 1 / 3], rtol=0, atol=1e-15)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(DomainError, match="sum to 1"):
            TypeDistribution.from_pairs([(agent(), 0.5), (agent(delta=2), 0.4)])
        with pytest.raises(DomainError, match="positive"):
            TypeDistribution.from_pairs([(agent(), 1.5), (agent(delta=2), -0.5)])

    def test_expect_point_mass(self):
        assert expect(TypeDistribution.point_mass(agent(delta=4)), lambda a: a.delta) == 4.0

    def test_expect_average(self):
        d = TypeDistribution.from_pairs([(agent(delta=1), 0.5), (agent(delta=3), 0.5)])
        assert expect(d, lambda a: a.delta) == 2.0

    def test_expect_product(self):
        d = TypeDistribution.point_mass(agent(delta=2, theta=0.2))
        assert expect(d, lambda a: a.theta * (a.delta - 1)) == pytest.approx(0.2, abs=1e-15)

    def test_expect_rejects_non_finite(self):
        with pytest.raises(NumericError):
            expect(TypeDistribution.point_mass(agent()), lambda a: math.inf)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.1, 5), st.floats(0, 1)), min_size=1, max_size=12), st.floats(-3, 3))
    def test_empirical_preserves_expectations(self, params, c):
        p = Population(tuple(agent(delta=d, theta=t) for d, t in params))
        d = empirical_distribution(p)
        f = lambda a: a.delta * a.theta + 1.0  # noqa: E731
        g = lambda a: a.delta  # noqa: E731
        assert expect(d, f) == pytest.approx(sum(f(a) for a in p.agents) / p.n, abs=1e-12)
        # linearity
        assert expect(d, lambda a: f(a) + c * g(a)) == pytest.approx(expect(d, f) + c * expect(d, g), abs=1e-12)

    def test_sampling_frequencies(self):
        d = TypeDistribution.from_pairs([(agent(delta=1), 0.5), (agent(delta=2), 0.5)])
        idx = d.sample_indices(10_000, seed=42)
        assert abs(np.mean(idx == 0) - 0.5) < 0.02
        np.testing.assert_array_equal(idx, d.sample_indices(10_000, seed=42))


def test_single_stock_spec():
    s = SingleStockSpec(mu=1.0, sigma=0.5)
    a = s.agent(delta=2.0, theta=0.3)
    assert (a.mu, a.sigma, a.nu) == (1.0, 0.5, 0.0)
    with pytest.raises(DomainError):
        SingleStockSpec(mu=1.0, sigma=0.0)


def test_population_is_immutable():
    p = Population((agent(),))
    with pytest.raises(Exception):
        p.agents = ()
    with pytest.raises(ValueError):
        p.delta[0] = 3.0
    with pytest.raises(DomainError):
        Population(())


def test_agent_replace_round_trip():
    a = agent(delta=3)
    assert a.replace(theta=0.5) == AgentType(1.0, 3.0, 0.5, 1.0, 0.0, 1.0)
    assert AgentType(**a.to_dict()) == a
