"""Values passed between the stages of a run."""
from collections import namedtuple
from enum import Enum

from lodestar.gateways.structured import Decision
from lodestar.knowledge.evidence import ImageEvidence, UserPrompt
from lodestar.knowledge.knowledge_base import KnowledgeBase
from .cost import CostReport

MAX_QUERIES = 5


class RunStatus(Enum):
    """Status of a run. Runs move through the statuses in declaration order, or end in Failed."""

    Bootstrapping = 'Bootstrapping'
    Looping = 'Looping'
    Refining = 'Refining'
    Generating = 'Generating'
    Done = 'Done'
    Failed = 'Failed'


_TRANSITIONS = {
    RunStatus.Bootstrapping: {RunStatus.Looping, RunStatus.Refining},
    RunStatus.Looping: {RunStatus.Refining},
    RunStatus.Refining: {RunStatus.Generating, RunStatus.Done},
    RunStatus.Generating: {RunStatus.Done},
    RunStatus.Done: set(),
    RunStatus.Failed: set(),
}


class QueryPlan(namedtuple('QueryPlan', ['sub_questions', 'text_queries', 'image_queries', 'round'])):
    """Sub-questions and the text and image queries of one round."""

    @property
    def queries(self):
        return list(self.text_queries) + list(self.image_queries)

    def __len__(self):
        return len(self.text_queries) + len(self.image_queries)

    def to_dict(self):
        return {'sub_questions': list(self.sub_questions), 'text_queries': list(self.text_queries),
                'image_queries': list(self.image_queries), 'round': self.round}


class SufficiencyDecision(namedtuple('SufficiencyDecision', ['value', 'rationale', 'round', 'retrieved', 'source'])):
    """Outcome of one loop round.

    ``retrieved`` tells whether the round dispatched any query. ``source`` is 'model', 'policy', 'cap' or 'fallback'.
    """

    def to_dict(self):
        return {'value': self.value.value, 'rationale': self.rationale, 'round': self.round,
                'retrieved': self.retrieved, 'source': self.source}

    @classmethod
    def from_dict(cls, data):
        return cls(Decision(data['value']), data['rationale'], data['round'], data['retrieved'], data['source'])


class EnrichedPrompt(namedtuple('EnrichedPrompt', ['prompt_text', 'textual_features', 'visual_features',
                                                   'refined_images', 'source_prompt_id'])):
    """The extended generation prompt together with the features and reference images it was built from."""

    def __new__(cls, prompt_text, textual_features, visual_features, refined_images, source_prompt_id):
        if not isinstance(prompt_text, str) or not prompt_text.strip():
            raise ValueError('The enriched prompt text must not be empty.')
        return super().__new__(cls, prompt_text, tuple(textual_features), tuple(visual_features),
                               tuple(refined_images), source_prompt_id)

    def to_dict(self):
        return {
            'prompt_text': self.prompt_text,
            'textual_features': list(self.textual_features),
            'visual_features': list(self.visual_features),
            'refined_images': [image.content_hash for image in self.refined_images],
            'source_prompt_id': self.source_prompt_id,
        }

    def to_state_dict(self):
        data = self.to_dict()
        data['refined_images'] = [image.to_dict() for image in self.refined_images]
        return data

    @classmethod
    def from_state_dict(cls, data):
        return cls(data['prompt_text'], data['textual_features'], data['visual_features'],
                   [ImageEvidence.from_dict(image) for image in data['refined_images']], data['source_prompt_id'])


_STATE_FIELDS = ['prompt', 'kb', 'pending_questions', 'round', 'decisions', 'cost', 'status', 'enriched', 'error',
                 'bootstrap_ran']


class RunState(namedtuple('RunState', _STATE_FIELDS)):
    """Progress of a run. A new value is produced at every stage boundary."""

    @classmethod
    def initial(cls, prompt):
        return cls(prompt, KnowledgeBase(), (), 0, (), CostReport.empty(), RunStatus.Bootstrapping, None, None, False)

    @property
    def loop_iterations(self):
        """Bootstrap retrieval (if it ran) plus the loop rounds that dispatched queries."""
        return int(self.bootstrap_ran) + sum(1 for decision in self.decisions if decision.retrieved)

    def advance(self, status, **changes):
        """Return the state moved to ``status``. Raises ValueError on a transition against the stage order."""
        if status is not RunStatus.Failed and status not in _TRANSITIONS[self.status]:
            raise ValueError(f'Invalid status transition {self.status.value} -> {status.value}.')
        if status is RunStatus.Done and (changes.get('enriched') or self.enriched) is None:
            raise ValueError('A run can only be done with an enriched prompt.')
        return self._replace(status=status, **changes)

    def to_dict(self):
        """Serialize everything but the knowledge base, which is persisted on its own."""
        return {
            'prompt': self.prompt.to_dict(),
            'pending_questions': list(self.pending_questions),
            'round': self.round,
            'decisions': [decision.to_dict() for decision in self.decisions],
            'cost': self.cost.to_dict(),
            'status': self.status.value,
            'enriched': self.enriched.to_state_dict() if self.enriched is not None else None,
            'error': self.error,
            'bootstrap_ran': self.bootstrap_ran,
        }

    @classmethod
    def from_dict(cls, data, kb):
        enriched = EnrichedPrompt.from_state_dict(data['enriched']) if data.get('enriched') else None
        return cls(UserPrompt.from_dict(data['prompt']), kb, tuple(data['pending_questions']), data['round'],
                   tuple(SufficiencyDecision.from_dict(d) for d in data['decisions']),
                   CostReport.from_dict(data['cost']), RunStatus(data['status']), enriched, data.get('error'),
                   data['bootstrap_ran'])
