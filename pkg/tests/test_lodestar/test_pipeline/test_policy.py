import pytest

from lodestar.gateways import Decision
from lodestar.pipeline import IterationPolicy
from lodestar.utils.config import ConfigError


@pytest.mark.parametrize('testdescr,spec,expected', [
    ('adaptive', 'adaptive', IterationPolicy('adaptive', None)),
    ('fixed with colon', 'fixed:2', IterationPolicy('fixed', 2)),
    ('fixed with parentheses', 'fixed(3)', IterationPolicy('fixed', 3)),
])
def test_from_spec(spec, expected, testdescr):
    assert IterationPolicy.from_spec(spec) == expected


@pytest.mark.parametrize('spec', ['fixed', 'fixed:0', 'adaptive:2', 'sometimes'])
def test_from_spec_invalid(spec):
    with pytest.raises(ConfigError):
        IterationPolicy.from_spec(spec)


def test_fixed_schedule():
    policy = IterationPolicy.fixed(2)
    assert [policy.scheduled_decision(n) for n in range(4)] == [Decision.Retrieval, Decision.Retrieval,
                                                                Decision.Refine, Decision.Refine]
    assert not policy.uses_model
    assert str(policy) == 'fixed:2'


def test_adaptive_has_no_schedule():
    policy = IterationPolicy.adaptive()
    assert policy.scheduled_decision(5) is None
    assert policy.uses_model
    assert str(policy) == 'adaptive'


def test_fixed_needs_a_round():
    with pytest.raises(ValueError):
        IterationPolicy.fixed(0)
