"""Parsing of structured model answers into validated values."""
from enum import Enum
import json
from typing import List, Optional

from pydantic import BaseModel, ValidationError, ValidationInfo, field_validator

from lodestar.utils.utils import LodestarError


class ModelOutputError(LodestarError):
    """Base class for model answers that can not be used."""

    def __init__(self, msg, raw):
        super().__init__(msg)
        self.raw = raw


class StructuredOutputError(ModelOutputError):
    """Raised when an answer contains no well-formed JSON object."""


class SchemaValidationError(ModelOutputError):
    """Raised when the JSON object of an answer violates the schema. ``field`` names the offending field."""

    def __init__(self, msg, field, raw):
        super().__init__(msg, raw)
        self.field = field


class Decision(str, Enum):
    """Outcome of the sufficiency check."""

    Retrieval = 'Retrieval'
    Refine = 'Refine'


def _clean_strings(values):
    cleaned = [value.strip() for value in values]
    return [value for value in cleaned if value]


def _check_indices(values, count, field):
    seen = []
    for index in values:
        if count is not None and not 1 <= index <= count:
            raise ValueError(f'index {index} in {field} is out of range 1..{count}')
        if index not in seen:
            seen.append(index)
    return seen


class QueryPlanOutput(BaseModel):
    sub_questions: List[str] = []
    text_queries: List[str] = []
    image_queries: List[str] = []

    @field_validator('sub_questions', 'text_queries', 'image_queries')
    @classmethod
    def _strip(cls, values):
        return _clean_strings(values)


class PageRankingOutput(BaseModel):
    ranking: List[int]

    @field_validator('ranking')
    @classmethod
    def _in_range(cls, values, info: ValidationInfo):
        return _check_indices(values, (info.context or {}).get('count'), 'ranking')


class KeptItemsOutput(BaseModel):
    keep: List[int]

    @field_validator('keep')
    @classmethod
    def _in_range(cls, values, info: ValidationInfo):
        return _check_indices(values, (info.context or {}).get('count'), 'keep')


class DecisionOutput(BaseModel):
    decision: Decision
    rationale: str = ''


class ContentRefineOutput(BaseModel):
    textual_features: List[str]
    image_indices: List[int] = []

    @field_validator('textual_features')
    @classmethod
    def _strip(cls, values):
        return _clean_strings(values)

    @field_validator('image_indices')
    @classmethod
    def _in_range(cls, values, info: ValidationInfo):
        return _check_indices(values, (info.context or {}).get('image_count'), 'image_indices')


class VisualFeaturesOutput(BaseModel):
    visual_features: List[str]

    @field_validator('visual_features')
    @classmethod
    def _strip(cls, values):
        return _clean_strings(values)


class ExtendedPromptOutput(BaseModel):
    prompt: str

    @field_validator('prompt')
    @classmethod
    def _non_empty(cls, value):
        if not value.strip():
            raise ValueError('prompt is empty')
        return value.strip()


class VerdictOutput(BaseModel):
    verdict: bool
    note: Optional[str] = None


SCHEMAS = {
    'query_plan': QueryPlanOutput,
    'page_ranking': PageRankingOutput,
    'kept_texts': KeptItemsOutput,
    'kept_images': KeptItemsOutput,
    'decision': DecisionOutput,
    'content_refine': ContentRefineOutput,
    'visual_features': VisualFeaturesOutput,
    'extended_prompt': ExtendedPromptOutput,
    'verdict': VerdictOutput,
}


def extract_json_object(raw):
    """Return the first JSON object embedded in ``raw``, tolerating surrounding prose and code fences."""
    decoder = json.JSONDecoder()
    position = raw.find('{')
    while position != -1:
        try:
            value, _ = decoder.raw_decode(raw, position)
        except json.JSONDecodeError:
            pass
        else:
            if isinstance(value, dict):
                return value
        position = raw.find('{', position + 1)
    raise StructuredOutputError('The answer contains no JSON object.', raw)


def parse_structured(raw, schema_id, context=None):
    """Extract and validate the structured value of a model answer.

    Parameters
    ----------
    raw
        Answer text as returned by the model.
    schema_id
        One of the keys of :data:`SCHEMAS`.
    context
        Validation context, e.g. ``{'count': 4}`` to bound 1-based indices.

    Raises
    ------
    StructuredOutputError
        No JSON object found.
    SchemaValidationError
        The object does not match the schema.
    """
    if schema_id not in SCHEMAS:
        raise KeyError(f"Unknown schema '{schema_id}'.")
    document = extract_json_object(raw)
    try:
        return SCHEMAS[schema_id].model_validate(document, context=context)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = '.'.join(str(part) for part in error['loc']) or schema_id
        raise SchemaValidationError(f"Field '{field}': {error['msg']}", field, raw) from exc
