"""Iteration policies of the retrieval loop."""
from collections import namedtuple

from lodestar.gateways.structured import Decision
from lodestar.utils.config import parse_policy_spec


class IterationPolicy(namedtuple('IterationPolicy', ['kind', 'rounds'])):
    """Either ``adaptive`` (the model decides after each round) or ``fixed`` with a number of loop rounds."""

    @classmethod
    def adaptive(cls):
        return cls('adaptive', None)

    @classmethod
    def fixed(cls, rounds):
        if rounds < 1:
            raise ValueError(f'A fixed-round policy needs at least one round, got {rounds}.')
        return cls('fixed', rounds)

    @classmethod
    def from_spec(cls, spec):
        """Parse ``adaptive``, ``fixed:<n>`` or ``fixed(<n>)``."""
        kind, rounds = parse_policy_spec(spec)
        return cls.adaptive() if kind == 'adaptive' else cls.fixed(rounds)

    @property
    def uses_model(self):
        return self.kind == 'adaptive'

    def scheduled_decision(self, completed_rounds):
        """Return the decision of a fixed policy after ``completed_rounds`` loop rounds, None for adaptive."""
        if self.kind == 'adaptive':
            return None
        return Decision.Retrieval if completed_rounds < self.rounds else Decision.Refine

    def __str__(self):
        return self.kind if self.kind == 'adaptive' else f'fixed:{self.rounds}'
