"""Loading of evaluation datasets: prompts, ground-truth features and true/false questions."""
from collections import namedtuple, defaultdict
import json
import logging
import os

import yaml

from lodestar.knowledge.evidence import CONCEPTS, GroundTruthFeature, UserPrompt
from lodestar.utils.utils import LodestarError

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

DATASET_SCHEMA_VERSION = 1


class DatasetError(LodestarError):
    """Raised when a dataset file is malformed."""


class EvalQuestion(namedtuple('EvalQuestion', ['id', 'prompt_id', 'statement', 'concept', 'needs_reference_image',
                                               'reference_blob', 'gold_answer'])):
    """A true/false question about a generated image. The gold answer is always True."""

    def __new__(cls, id, prompt_id, statement, concept, needs_reference_image=False, reference_blob=None):
        if not isinstance(statement, str) or not statement.strip():
            raise ValueError(f"Question '{id}' has an empty statement.")
        if concept not in CONCEPTS:
            raise ValueError(f"Question '{id}' has unknown concept '{concept}'.")
        if needs_reference_image and not reference_blob:
            raise ValueError(f"Question '{id}' needs a reference image but names none.")
        return super().__new__(cls, str(id), str(prompt_id), statement, concept, bool(needs_reference_image),
                               reference_blob, True)


Judgment = namedtuple('Judgment', ['question_id', 'value', 'judge_id', 'audit_flag'], defaults=(False,))
Judgment.__doc__ = 'Verdict of the judge on one question. ``audit_flag`` marks verdicts scored False as unparseable.'


class Dataset():
    """An evaluation dataset. ``reference_blob`` paths of questions are resolved relative to ``base_dir``."""

    def __init__(self, prompts, features, questions, base_dir='.'):
        self.prompts = list(prompts)
        self.base_dir = base_dir
        self._by_id = {}
        for prompt in self.prompts:
            if prompt.id in self._by_id:
                raise DatasetError(f"Duplicate prompt id '{prompt.id}'.")
            self._by_id[prompt.id] = prompt
        self.features = defaultdict(list)
        self.questions = defaultdict(list)
        for prompt_id, feature in features:
            self._check_prompt(prompt_id, 'feature')
            self.features[prompt_id].append(feature)
        question_ids = set()
        for question in questions:
            self._check_prompt(question.prompt_id, 'question')
            if question.id in question_ids:
                raise DatasetError(f"Duplicate question id '{question.id}'.")
            question_ids.add(question.id)
            self.questions[question.prompt_id].append(question)

    def _check_prompt(self, prompt_id, kind):
        if prompt_id not in self._by_id:
            raise DatasetError(f"A {kind} references unknown prompt '{prompt_id}'.")

    def __len__(self):
        return len(self.prompts)

    def prompt(self, prompt_id):
        return self._by_id[prompt_id]

    def entity_class(self, prompt_id):
        return self._by_id[prompt_id].entity_class

    def reference_path(self, question):
        if question.reference_blob is None:
            return None
        return os.path.join(self.base_dir, question.reference_blob)


def _read_document(path):
    with open(path, 'r', encoding='utf-8') as f:
        if path.endswith('.json'):
            return json.load(f)
        return yaml.safe_load(f)


def load_dataset(path):
    """Load a dataset from a JSON or YAML file.

    The document has ``schema_version``, ``prompts`` (id, text, entity_class), ``features`` (prompt_id, statement,
    concept, optional id) and ``questions`` (prompt_id, statement, concept, needs_reference_image, optional
    reference_blob and id). Question ids default to ``<prompt_id>-q<k>``, feature ids to ``<prompt_id>-f<k>``.
    """
    try:
        document = _read_document(path)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise DatasetError(f'Could not read dataset {path}: {exc}') from exc
    if not isinstance(document, dict):
        raise DatasetError(f'Dataset {path} must contain a mapping.')
    if document.get('schema_version', DATASET_SCHEMA_VERSION) != DATASET_SCHEMA_VERSION:
        raise DatasetError(f"Unsupported dataset schema_version {document['schema_version']!r}.")

    try:
        prompts = [UserPrompt(p['id'], p['text'], p.get('entity_class'), p.get('concept_tags') or ())
                   for p in document.get('prompts') or []]
        counters = defaultdict(int)
        features = []
        for f in document.get('features') or []:
            counters[('f', f['prompt_id'])] += 1
            feature_id = f.get('id') or f"{f['prompt_id']}-f{counters[('f', f['prompt_id'])]}"
            features.append((str(f['prompt_id']), GroundTruthFeature(feature_id, f['statement'], f['concept'])))
        questions = []
        for q in document.get('questions') or []:
            counters[('q', q['prompt_id'])] += 1
            question_id = q.get('id') or f"{q['prompt_id']}-q{counters[('q', q['prompt_id'])]}"
            questions.append(EvalQuestion(question_id, q['prompt_id'], q['statement'], q['concept'],
                                          q.get('needs_reference_image', False), q.get('reference_blob')))
    except KeyError as exc:
        raise DatasetError(f'Dataset {path} lacks field {exc.args[0]!r} in an entry.') from exc
    except ValueError as exc:
        raise DatasetError(f'Invalid entry in dataset {path}: {exc}') from exc

    dataset = Dataset(prompts, features, questions, base_dir=os.path.dirname(os.path.abspath(path)))
    LOG.debug('Loaded dataset %s with %d prompts.', path, len(dataset))
    return dataset
