"""Instruction templates for every model role.

Templates use ``str.format`` placeholders. Literal braces of the requested JSON answers are doubled.
"""
from enum import Enum
import string

from lodestar.utils.utils import LodestarError


class TemplateError(LodestarError):
    """Raised when a template is rendered with missing or unexpected placeholders."""

    def __init__(self, msg, missing=(), unexpected=()):
        super().__init__(msg)
        self.missing = tuple(missing)
        self.unexpected = tuple(unexpected)


class _TemplateFormatter(string.Formatter):
    # unused keyword arguments are an error
    def check_unused_args(self, used_args, args, kwargs):
        unexpected = sorted(set(kwargs) - set(used_args))
        if unexpected:
            raise TemplateError(f'Unexpected placeholders {unexpected}.', unexpected=unexpected)


_FORMATTER = _TemplateFormatter()


class InstructionRole(Enum):
    """The instruction roles of the reasoning model, plus the two evaluation roles of the judge."""

    QueryPlanning = 'QueryPlanning'
    TextFilter = 'TextFilter'
    ImageFilter = 'ImageFilter'
    Sufficiency = 'Sufficiency'
    ContentRefine = 'ContentRefine'
    VisualRefine = 'VisualRefine'
    PromptExtend = 'PromptExtend'
    Bootstrap = 'Bootstrap'
    QAJudge = 'QAJudge'
    AlignmentJudge = 'AlignmentJudge'

    @property
    def template(self):
        return _TEMPLATES[self]

    @property
    def schema(self):
        """Id of the structured output schema the role answers with."""
        return _SCHEMAS[self]

    @property
    def placeholders(self):
        return frozenset(name for _, name, _, _ in _FORMATTER.parse(self.template) if name)

    def render(self, **context):
        """Fill the template. All placeholders must be bound and no other names may be supplied."""
        missing = sorted(self.placeholders - set(context))
        if missing:
            raise TemplateError(f'Template {self.value} misses values for {missing}.', missing=missing)
        return _FORMATTER.format(self.template, **context)


_JSON_ONLY = 'Answer with a single JSON object and nothing else.'

_TEMPLATES = {
    InstructionRole.Bootstrap: (
        'You rank web search results for a factual image generation request.\n'
        'Image request: {prompt}\n'
        'Search query: {query}\n'
        'Search results:\n{snippets}\n'
        'Rank all {count} results by how likely the full page contains facts needed to draw the requested image '
        'accurately, most relevant first. Use the 1-based result numbers.\n'
        + _JSON_ONLY + ' Format: {{"ranking": [<result number>, ...]}}'
    ),
    InstructionRole.QueryPlanning: (
        'You plan web retrieval for a factual image generation request.\n'
        'Image request: {prompt}\n'
        '{knowledge}\n'
        'Questions raised so far:\n{questions}\n'
        'Identify information that is still under-specified or missing to draw the image faithfully. Break it into '
        'sub-questions and write one to five search queries in total: text queries for facts and image queries for '
        'visual appearance. {modality_note}Return no queries if the knowledge base already covers everything.\n'
        + _JSON_ONLY + ' Format: {{"sub_questions": [...], "text_queries": [...], "image_queries": [...]}}'
    ),
    InstructionRole.TextFilter: (
        'You filter retrieved web text for a factual image generation request.\n'
        'Image request: {prompt}\n'
        'Retrieved texts:\n{candidates}\n'
        'Keep only the texts that align semantically with the request and contain relevant facts. '
        'Use the 1-based numbers of the {count} texts above.\n'
        + _JSON_ONLY + ' Format: {{"keep": [<text number>, ...]}}'
    ),
    InstructionRole.ImageFilter: (
        'You filter retrieved web images for a factual image generation request. The images are attached in the '
        'order listed.\n'
        'Image request: {prompt}\n'
        '{knowledge}\n'
        'Retrieved images:\n{candidates}\n'
        'Keep only the images that are consistent with both the request and the textual evidence. '
        'Use the 1-based numbers of the {count} images above.\n'
        + _JSON_ONLY + ' Format: {{"keep": [<image number>, ...]}}'
    ),
    InstructionRole.Sufficiency: (
        'You decide whether retrieval for a factual image generation request can stop.\n'
        'Image request: {prompt}\n'
        '{knowledge}\n'
        'Sub-questions:\n{questions}\n'
        'If the knowledge base is incomplete or lacks essential details for the sub-questions, answer "Retrieval". '
        'If it sufficiently addresses them, answer "Refine".\n'
        + _JSON_ONLY + ' Format: {{"decision": "Retrieval" | "Refine", "rationale": "<one sentence>"}}'
    ),
    InstructionRole.ContentRefine: (
        'You condense the knowledge base of a factual image generation request.\n'
        'Image request: {prompt}\n'
        '{knowledge}\n'
        'List the textual facts that matter for drawing the image, as short standalone statements. Then select the '
        'images to use as references, removing duplicates and near duplicates. Use the 1-based image numbers '
        '(I1 to I{image_count}).\n'
        + _JSON_ONLY + ' Format: {{"textual_features": [...], "image_indices": [<image number>, ...]}}'
    ),
    InstructionRole.VisualRefine: (
        'You extract visual control features from reference images. The {image_count} selected reference images '
        'are attached.\n'
        'Image request: {prompt}\n'
        'Textual facts:\n{textual_features}\n'
        'Identify the critical visual elements the generated image must reproduce, such as shape, color, '
        'materials, markings and layout.\n'
        + _JSON_ONLY + ' Format: {{"visual_features": [...]}}'
    ),
    InstructionRole.PromptExtend: (
        'You write the final prompt for an image generation model. {image_count} reference images are attached.\n'
        'Image request: {prompt}\n'
        'Textual facts:\n{textual_features}\n'
        'Visual features:\n{visual_features}\n'
        'Extend the request into one detailed generation prompt that incorporates the facts and visual features. '
        'Do not add facts that are not listed.\n'
        + _JSON_ONLY + ' Format: {{"prompt": "<extended prompt>"}}'
    ),
    InstructionRole.QAJudge: (
        'You evaluate a generated image. The generated image is attached first. {reference_note}\n'
        'Statement: {statement}\n'
        'Is the statement true for the generated image?\n'
        + _JSON_ONLY + ' Format: {{"verdict": true | false}}'
    ),
    InstructionRole.AlignmentJudge: (
        'You check retrieved evidence against a ground-truth fact.\n'
        'Fact: {statement}\n'
        '{evidence}\n'
        'Does the retrieved evidence support the fact?\n'
        + _JSON_ONLY + ' Format: {{"verdict": true | false}}'
    ),
}

_SCHEMAS = {
    InstructionRole.Bootstrap: 'page_ranking',
    InstructionRole.QueryPlanning: 'query_plan',
    InstructionRole.TextFilter: 'kept_texts',
    InstructionRole.ImageFilter: 'kept_images',
    InstructionRole.Sufficiency: 'decision',
    InstructionRole.ContentRefine: 'content_refine',
    InstructionRole.VisualRefine: 'visual_features',
    InstructionRole.PromptExtend: 'extended_prompt',
    InstructionRole.QAJudge: 'verdict',
    InstructionRole.AlignmentJudge: 'verdict',
}
