"""
Per-stage cost accounting of a run.

Every cassette entry of a run is attributed to the stage that was active when it was produced. Search calls count as
retrieval calls; latency of search, reader and image download exchanges counts as retrieval time.
"""
from collections import namedtuple
import threading

import pandas as pd

STAGES = ('Bootstrap', 'QueryPlanning', 'KnowledgeAccumulation', 'FineGrainedRefine', 'PromptExtension')
SEARCH_SERVICES = ('text_search', 'image_search')
RETRIEVAL_SERVICES = SEARCH_SERVICES + ('page_reader', 'image_fetch')

_STAGE_FIELDS = ('retrieval_calls', 'retrieval_ms', 'input_tokens', 'output_tokens', 'model_calls')
_ROUND_FIELDS = ('text_retrievals', 'image_retrievals', 'retrieval_ms')


class StageCost(namedtuple('StageCost', _STAGE_FIELDS, defaults=(0,) * len(_STAGE_FIELDS))):
    """Counters of one stage. Time is kept in integer milliseconds so sums stay exact."""

    @property
    def retrieval_seconds(self):
        return self.retrieval_ms / 1000


class RoundCost(namedtuple('RoundCost', _ROUND_FIELDS, defaults=(0,) * len(_ROUND_FIELDS))):
    """Retrieval counters of one round. Round 0 is the bootstrap retrieval."""


def _add(counter, **increments):
    return counter._replace(**{name: getattr(counter, name) + value for name, value in increments.items()})


class CostReport(namedtuple('CostReport', ['stages', 'rounds', 'loop_iterations'])):
    """Costs of a run per stage and per retrieval round."""

    @classmethod
    def empty(cls):
        return cls({stage: StageCost() for stage in STAGES}, {}, 0)

    @property
    def totals(self):
        stage_sums = {field: sum(getattr(cost, field) for cost in self.stages.values()) for field in _STAGE_FIELDS}
        return {
            'retrieval_calls': stage_sums['retrieval_calls'],
            'retrieval_seconds': stage_sums['retrieval_ms'] / 1000,
            'input_tokens': stage_sums['input_tokens'],
            'output_tokens': stage_sums['output_tokens'],
            'model_calls': stage_sums['model_calls'],
            'text_retrievals': sum(cost.text_retrievals for cost in self.rounds.values()),
            'image_retrievals': sum(cost.image_retrievals for cost in self.rounds.values()),
            'loop_iterations': self.loop_iterations,
        }

    def to_dict(self):
        return {
            'stages': {stage: {'retrieval_calls': cost.retrieval_calls,
                               'retrieval_seconds': cost.retrieval_seconds,
                               'input_tokens': cost.input_tokens,
                               'output_tokens': cost.output_tokens,
                               'model_calls': cost.model_calls}
                       for stage, cost in self.stages.items()},
            'rounds': [{'round': r, 'text_retrievals': cost.text_retrievals, 'image_retrievals': cost.image_retrievals,
                        'retrieval_seconds': cost.retrieval_ms / 1000}
                       for r, cost in sorted(self.rounds.items())],
            'totals': self.totals,
        }

    @classmethod
    def from_dict(cls, data):
        stages = {stage: StageCost(values['retrieval_calls'], round(values['retrieval_seconds'] * 1000),
                                   values['input_tokens'], values['output_tokens'], values.get('model_calls', 0))
                  for stage, values in data['stages'].items()}
        rounds = {entry['round']: RoundCost(entry['text_retrievals'], entry['image_retrievals'],
                                            round(entry['retrieval_seconds'] * 1000))
                  for entry in data['rounds']}
        return cls(stages, rounds, data['totals']['loop_iterations'])

    def as_df(self):
        """Return the per-stage rows plus a total row as a pandas DataFrame."""
        rows = [{'stage': stage, 'retrieval_calls': cost.retrieval_calls,
                 'retrieval_seconds': cost.retrieval_seconds, 'input_tokens': cost.input_tokens,
                 'output_tokens': cost.output_tokens}
                for stage, cost in self.stages.items()]
        totals = self.totals
        rows.append({'stage': 'Total', **{key: totals[key] for key in ('retrieval_calls', 'retrieval_seconds',
                                                                        'input_tokens', 'output_tokens')}})
        return pd.DataFrame(rows).set_index('stage')


CostRendering = namedtuple('CostRendering', ['data', 'table'])


def report_cost(bundle):
    """Render the cost report of a run bundle as a JSON-ready dict and as a text table built from the same values."""
    report = bundle.cost
    totals = report.totals
    table = report.as_df().to_string(float_format=lambda value: f'{value:.3f}')
    table += (f"\n\ntext retrievals: {totals['text_retrievals']}"
              f"\nimage retrievals: {totals['image_retrievals']}"
              f"\nloop iterations: {totals['loop_iterations']}\n")
    return CostRendering(report.to_dict(), table)


class CostTracker():
    """Accumulate cassette entries into a :class:`CostReport`.

    The pipeline sets :attr:`stage` and :attr:`round` at its sequencing points; :meth:`observe` is registered as a
    gateway session listener and may be called from several threads.
    """

    def __init__(self, report=None):
        report = report or CostReport.empty()
        self._stages = dict(report.stages)
        self._rounds = dict(report.rounds)
        self._lock = threading.Lock()
        self.stage = STAGES[0]
        self.round = 0

    def observe(self, entry):
        with self._lock:
            stage, round_ = self.stage, self.round
            increments = {}
            if entry.service == 'model':
                increments = {'input_tokens': entry.tokens_in, 'output_tokens': entry.tokens_out, 'model_calls': 1}
            elif entry.service in RETRIEVAL_SERVICES:
                increments = {'retrieval_ms': entry.latency_ms,
                              'retrieval_calls': 1 if entry.service in SEARCH_SERVICES else 0}
                round_cost = self._rounds.get(round_, RoundCost())
                self._rounds[round_] = _add(
                    round_cost, retrieval_ms=entry.latency_ms,
                    text_retrievals=int(entry.service == 'text_search'),
                    image_retrievals=int(entry.service == 'image_search'))
            if increments:
                self._stages[stage] = _add(self._stages[stage], **increments)

    def report(self, loop_iterations):
        with self._lock:
            return CostReport(dict(self._stages), dict(self._rounds), loop_iterations)
