"""Judging of generated images and retrieved evidence with the judge model."""
import logging
import re

from lodestar.gateways.instructions import InstructionRole
from lodestar.gateways.structured import ModelOutputError, StructuredOutputError, parse_structured
from .dataset import Judgment
from .scoring import AlignmentScore

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

_VERDICT_PATTERN = re.compile(r'\b(true|false)\b', re.IGNORECASE)


def parse_verdict(raw):
    """Return the boolean verdict of a judge answer.

    Accepts a JSON object with a ``verdict`` field or else the first standalone 'true' or 'false' in any case.
    """
    try:
        return parse_structured(raw, 'verdict').verdict
    except ModelOutputError:
        pass
    match = _VERDICT_PATTERN.search(raw)
    if match is None:
        raise StructuredOutputError('The answer contains no true/false verdict.', raw)
    return match.group(1).lower() == 'true'


def judge_id(judge):
    """Name of the judge of a gateway session: the configured model, or the binding name."""
    return judge.hub.settings.get(judge.model_binding, {}).get('model') or judge.model_binding


def _ask(judge, role, context, images):
    try:
        value, _ = judge.model.invoke_structured(role, context, images=images, parser=parse_verdict)
        return value, False
    except ModelOutputError as exc:
        LOG.warning('Unparseable %s verdict, scoring it False: %s', role.value, exc)
        return False, True


def judge_question(question, image, reference, judge):
    """Ask the judge whether ``question`` holds for the generated image.

    ``image`` and ``reference`` are blob keys in the judge session's blob store. The reference must be given
    exactly when the question needs one.
    """
    if question.needs_reference_image and reference is None:
        raise ValueError(f"Question '{question.id}' needs a reference image.")
    if not question.needs_reference_image and reference is not None:
        raise ValueError(f"Question '{question.id}' takes no reference image.")
    if reference is None:
        note, images = 'No reference image is given.', [image]
    else:
        note, images = 'A reference image showing the fact is attached second.', [image, reference]
    value, audit = _ask(judge, InstructionRole.QAJudge, {'statement': question.statement, 'reference_note': note},
                        images)
    return Judgment(question.id, value, judge_id(judge), audit)


def _render_evidence(texts, images):
    if not texts and not images:
        return 'Retrieved evidence: (none)'
    lines = ['Retrieved evidence:']
    lines.extend(f'[T{i}] {text.content} (source: {text.source_url})' for i, text in enumerate(texts, start=1))
    lines.extend(f'[I{i}] {image.title} (source: {image.source_url})' for i, image in enumerate(images, start=1))
    return '\n'.join(lines)


def alignment_score(features, kb_texts, kb_images, judge, prompt_id=None):
    """Judge per ground-truth feature whether the retrieved evidence supports it. Returns an AlignmentScore."""
    features = list(features)
    if not features:
        raise ValueError('alignment_score needs at least one ground-truth feature.')
    evidence = _render_evidence(kb_texts, kb_images)
    image_keys = [image.bytes_ref for image in kb_images]
    bits, audit_flags = [], []
    for feature in features:
        value, audit = _ask(judge, InstructionRole.AlignmentJudge,
                            {'statement': feature.statement, 'evidence': evidence}, image_keys)
        bits.append(bool(value))
        audit_flags.append(audit)
    return AlignmentScore.from_bits(prompt_id, [feature.id for feature in features], bits, audit_flags)
