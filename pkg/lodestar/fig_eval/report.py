"""Evaluation of a set of runs against a dataset and rendering of the report."""
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
import logging
import os

from lodestar._base import write_atomic, write_json
from lodestar.knowledge.persistence import BlobStore
from lodestar.pipeline.state import RunStatus
from lodestar.utils.utils import whitespace_token_count
from .judging import alignment_score, judge_question
from .scoring import Grouping, macro_average, score_prompt

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

REPORT_NAME = 'report.json'
TABLE_NAME = 'report.txt'

EvalReport = namedtuple('EvalReport', ['data', 'text', 'coverage', 'covered', 'skipped', 'scores', 'alignments'])


def _round(value, digits=4):
    return round(float(value), digits)


def _mean(values):
    values = list(values)
    return sum(values, Fraction(0)) / len(values) if values else None


def _skip_reason(bundle, questions):
    if bundle is None:
        return 'no run'
    if bundle.status is not RunStatus.Done:
        return f'run status {bundle.status.value}'
    if bundle.artifact is None:
        return 'no generated image'
    if not questions:
        return 'no questions'
    return None


def _store_file(blobs, path):
    with open(path, 'rb') as f:
        return blobs.put(f.read())


def _judge_prompt(dataset, bundle, questions, judge, concurrency):
    image = _store_file(judge.blobs, bundle.artifact.path)
    references = {question.id: _store_file(judge.blobs, dataset.reference_path(question))
                  for question in questions if question.reference_blob}

    def judge_one(question):
        return judge_question(question, image, references.get(question.id), judge)

    with ThreadPoolExecutor(max_workers=concurrency) as executor:
        judgments = list(executor.map(judge_one, questions))
    return score_prompt(judgments, questions)


def _alignment(bundle, features, judge):
    run_blobs = BlobStore(os.path.join(bundle.run_dir, 'kb', 'blobs'))
    for image in bundle.kb.images:
        run_blobs.copy_to(image.bytes_ref, judge.blobs)
    return alignment_score(features, bundle.kb.texts, bundle.kb.images, judge, bundle.prompt.id)


def _alignment_table(alignments, dataset, grouping):
    # alignment scores are averaged like prompt scores, with ``a`` in place of ``s``
    as_scores = [_AlignmentAsScore(score.prompt_id, score.a) for score in alignments]
    return macro_average(as_scores, dataset, grouping)


_AlignmentAsScore = namedtuple('_AlignmentAsScore', ['prompt_id', 's'])


def _cost_summary(bundles):
    keys = ('retrieval_calls', 'retrieval_seconds', 'input_tokens', 'output_tokens', 'text_retrievals',
            'image_retrievals', 'loop_iterations')
    totals = {key: 0 for key in keys}
    for bundle in bundles:
        for key, value in bundle.cost.totals.items():
            if key in totals:
                totals[key] += value
    summary = {'prompts': len(bundles), 'totals': {key: _round(value, 3) if key == 'retrieval_seconds' else value
                                                   for key, value in totals.items()}}
    summary['per_prompt'] = {key: _round(Fraction(value) / len(bundles)) if bundles else None
                             for key, value in totals.items()}
    return summary


def _comparison_row(bundles, alignments, all_table):
    iters = _mean(Fraction(bundle.cost.loop_iterations) for bundle in bundles)
    tokens = _mean(Fraction(whitespace_token_count(bundle.enriched.prompt_text)) for bundle in bundles)
    images = _mean(Fraction(len(bundle.enriched.refined_images)) for bundle in bundles)
    r_acc = _mean(score.a for score in alignments)
    g_acc = all_table.rows[0].score if all_table.rows else None
    return {
        'Iters': _round(iters) if iters is not None else None,
        'R.Acc': _round(r_acc * 100) if r_acc is not None else None,
        'Tokens': _round(tokens) if tokens is not None else None,
        'Images': _round(images) if images is not None else None,
        'G.Acc': _round(g_acc * 100) if g_acc is not None else None,
    }


def _render(data, tables):
    lines = [f"Coverage: {data['coverage']['covered']}/{data['coverage']['total']} prompts "
             f"({data['coverage']['ratio'] * 100:.1f}%)"]
    for prompt_id, reason in data['coverage']['skipped'].items():
        lines.append(f'  skipped {prompt_id}: {reason}')
    for title, table in tables:
        lines.extend(['', title, table.render().rstrip('\n')])
    lines.extend(['', 'Retrieval comparison',
                  '  '.join(f'{key}={"-" if value is None else value}' for key, value in data['comparison'].items()),
                  '', 'Cost',
                  '  '.join(f'{key}={value}' for key, value in data['cost']['totals'].items())])
    return '\n'.join(lines) + '\n'


def evaluate_run(dataset, bundles, judge, out_dir=None, micro=False, concurrency=4):
    """Judge the generated images of ``bundles`` and compose the evaluation report.

    Parameters
    ----------
    dataset
        :class:`~lodestar.fig_eval.dataset.Dataset` to evaluate against.
    bundles
        Mapping of prompt id to :class:`~lodestar.pipeline.run.RunBundle`. Prompts without a finished run with a
        generated image are reported as skipped and excluded from all scores.
    judge
        Gateway session of the judge model.
    out_dir
        If given, ``report.json`` and ``report.txt`` are written there.
    micro
        Average concept scores over questions instead of prompts.
    """
    if len(dataset) == 0:
        raise ValueError('The dataset has no prompts.')

    covered, skipped, scores, alignments = [], {}, [], []
    for prompt in dataset.prompts:
        bundle, questions = bundles.get(prompt.id), dataset.questions.get(prompt.id, [])
        reason = _skip_reason(bundle, questions)
        if reason is not None:
            LOG.warning('Skipping prompt %s in evaluation: %s.', prompt.id, reason)
            skipped[prompt.id] = reason
            continue
        covered.append(bundle)
        scores.append(_judge_prompt(dataset, bundle, questions, judge, concurrency))
        if dataset.features.get(prompt.id):
            alignments.append(_alignment(bundle, dataset.features[prompt.id], judge))

    coverage = Fraction(len(covered), len(dataset))
    tables = [
        ('Accuracy by entity class', macro_average(scores, dataset, Grouping.EntityClass)),
        ('Accuracy by concept', macro_average(scores, dataset, Grouping.Concept, micro=micro)),
        ('Accuracy overall', macro_average(scores, dataset, Grouping.All)),
        ('Retrieval alignment by entity class', _alignment_table(alignments, dataset, Grouping.EntityClass)),
        ('Retrieval alignment overall', _alignment_table(alignments, dataset, Grouping.All)),
    ]
    data = {
        'coverage': {'covered': len(covered), 'total': len(dataset), 'ratio': _round(coverage),
                     'skipped': skipped},
        'accuracy': {'entity_class': tables[0][1].to_dict(), 'concept': tables[1][1].to_dict(),
                     'all': tables[2][1].to_dict(), 'concept_averaging': 'micro' if micro else 'macro'},
        'alignment': {'entity_class': tables[3][1].to_dict(), 'all': tables[4][1].to_dict()},
        'prompts': [{'prompt_id': score.prompt_id, 'accuracy': _round(score.s * 100), 'questions': score.m,
                     'audited': score.audit_count} for score in scores],
        'comparison': _comparison_row(covered, alignments, tables[2][1]),
        'cost': _cost_summary(covered),
    }
    text = _render(data, tables)
    if out_dir is not None:
        write_json(os.path.join(out_dir, REPORT_NAME), data)
        write_atomic(os.path.join(out_dir, TABLE_NAME), text)
    return EvalReport(data, text, coverage, [bundle.prompt.id for bundle in covered], skipped, scores, alignments)
