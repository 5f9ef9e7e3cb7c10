"""Exact per-prompt scores and their macro averages."""
from collections import Counter, defaultdict, namedtuple
from enum import Enum
from fractions import Fraction

import pandas as pd
import plotnine as p9

from lodestar.knowledge.evidence import CONCEPTS, ENTITY_CLASSES
from lodestar.utils.plot_helper import _default_plot_theme
from lodestar.utils.utils import LodestarError


class CoverageError(LodestarError):
    """Raised when judgments do not cover the questions of a prompt exactly once."""

    def __init__(self, msg, missing=(), duplicates=(), unexpected=()):
        super().__init__(msg)
        self.missing = tuple(missing)
        self.duplicates = tuple(duplicates)
        self.unexpected = tuple(unexpected)


class Grouping(Enum):
    EntityClass = 'EntityClass'
    Concept = 'Concept'
    All = 'All'


class PromptScore(namedtuple('PromptScore', ['prompt_id', 's', 'm', 'true_count', 'concept_true', 'concept_m',
                                             'audit_count'])):
    """Accuracy of one prompt: the share of its questions judged True, as an exact fraction."""

    @property
    def per_concept(self):
        """Accuracy per concept, for the concepts the prompt has questions in."""
        return {concept: Fraction(self.concept_true[concept], m) for concept, m in self.concept_m.items()}


class AlignmentScore(namedtuple('AlignmentScore', ['prompt_id', 'a', 'n', 'feature_ids', 'bits', 'audit_count'])):
    """Share of ground-truth features supported by the retrieved evidence, as an exact fraction."""

    @classmethod
    def from_bits(cls, prompt_id, feature_ids, bits, audit_flags=()):
        bits = tuple(bool(bit) for bit in bits)
        return cls(prompt_id, Fraction(sum(bits), len(bits)), len(bits), tuple(feature_ids), bits,
                   sum(bool(flag) for flag in audit_flags))


def score_prompt(judgments, questions):
    """Return the PromptScore of one prompt's judgments.

    Raises
    ------
    CoverageError
        A question has no judgment, more than one, or a judgment belongs to no question.
    """
    questions = list(questions)
    if not questions:
        raise ValueError('score_prompt needs at least one question.')
    prompt_ids = {question.prompt_id for question in questions}
    if len(prompt_ids) != 1:
        raise ValueError(f'Questions of several prompts given: {sorted(prompt_ids)}')

    counts = Counter(judgment.question_id for judgment in judgments)
    question_ids = [question.id for question in questions]
    missing = [qid for qid in question_ids if counts[qid] == 0]
    duplicates = sorted(qid for qid, count in counts.items() if count > 1)
    unexpected = sorted(set(counts) - set(question_ids))
    if missing or duplicates or unexpected:
        raise CoverageError(f'Judgments do not cover the questions exactly once: missing {missing}, '
                            f'duplicated {duplicates}, unexpected {unexpected}.', missing, duplicates, unexpected)

    verdicts = {judgment.question_id: judgment for judgment in judgments}
    concept_true, concept_m = defaultdict(int), defaultdict(int)
    for question in questions:
        concept_m[question.concept] += 1
        concept_true[question.concept] += int(bool(verdicts[question.id].value))
    true_count = sum(concept_true.values())
    return PromptScore(prompt_ids.pop(), Fraction(true_count, len(questions)), len(questions), true_count,
                       dict(concept_true), dict(concept_m),
                       sum(1 for judgment in judgments if judgment.audit_flag))


ReportRow = namedtuple('ReportRow', ['group', 'score', 'support'])


class ReportTable(namedtuple('ReportTable', ['grouping', 'rows'])):
    """Mean scores per group. ``score`` is an exact fraction in [0, 1]; ``support`` counts prompts (or questions
    for micro-averaged concepts)."""

    def as_df(self):
        """Return the table as a pandas DataFrame with accuracy in percent."""
        return pd.DataFrame({
            'group': [row.group for row in self.rows],
            'accuracy': [float(row.score) * 100 for row in self.rows],
            'support': [row.support for row in self.rows],
        })

    def to_dict(self):
        return {'grouping': self.grouping.value,
                'rows': [{'group': row.group, 'accuracy': round(float(row.score) * 100, 4), 'support': row.support}
                         for row in self.rows]}

    def render(self):
        """Return a fixed-width text rendering."""
        lines = [f'{self.grouping.value:<16}{"Acc (%)":>9}{"n":>6}']
        lines.extend(f'{row.group:<16}{float(row.score) * 100:>9.1f}{row.support:>6}' for row in self.rows)
        return '\n'.join(lines) + '\n'

    def plot(self, title=None):
        """Plot the accuracy per group as a bar chart."""
        data = self.as_df()
        data['group'] = pd.Categorical(data['group'], categories=list(data['group']), ordered=True)
        return (
            p9.ggplot(data, p9.aes(x='group', y='accuracy')) +
            p9.geom_col() +
            p9.ylim(0, 100) +
            _default_plot_theme(len(data)) +
            p9.ggtitle(title or f'Accuracy (%) per {self.grouping.value}')
        )


def _mean(values):
    values = list(values)
    return sum(values, Fraction(0)) / len(values)


def _class_means(scores, dataset):
    by_class = defaultdict(list)
    for score in scores:
        try:
            entity_class = dataset.entity_class(score.prompt_id)
        except KeyError:
            raise ValueError(f"No metadata for prompt '{score.prompt_id}'.") from None
        if entity_class is None:
            raise ValueError(f"Prompt '{score.prompt_id}' has no entity class.")
        by_class[entity_class].append(score.s)
    return [ReportRow(entity_class, _mean(by_class[entity_class]), len(by_class[entity_class]))
            for entity_class in ENTITY_CLASSES if entity_class in by_class]


def macro_average(scores, dataset, grouping, micro=False):
    """Average per-prompt scores into a ReportTable.

    ``EntityClass`` averages prompts per class. ``Concept`` averages the per-prompt concept accuracies of the prompts
    that have questions in the concept, or with ``micro=True`` pools the questions of all prompts. ``All`` is the
    unweighted mean of the class means.
    """
    grouping = Grouping(grouping)
    scores = list(scores)
    if grouping is Grouping.EntityClass:
        return ReportTable(grouping, tuple(_class_means(scores, dataset)))

    if grouping is Grouping.All:
        class_rows = _class_means(scores, dataset)
        if not class_rows:
            return ReportTable(grouping, ())
        return ReportTable(grouping, (ReportRow('All', _mean(row.score for row in class_rows), len(scores)),))

    rows = []
    for concept in CONCEPTS:
        relevant = [score for score in scores if score.concept_m.get(concept)]
        if not relevant:
            continue
        if micro:
            m = sum(score.concept_m[concept] for score in relevant)
            rows.append(ReportRow(concept, Fraction(sum(score.concept_true[concept] for score in relevant), m), m))
        else:
            rows.append(ReportRow(concept, _mean(score.per_concept[concept] for score in relevant), len(relevant)))
    return ReportTable(grouping, tuple(rows))
