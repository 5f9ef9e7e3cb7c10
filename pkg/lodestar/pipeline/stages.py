"""
The stages of a run: bootstrap, the loop stages (plan, retrieve, accumulate, decide) and prompt construction.

Model calls and knowledge base updates happen only here, in stage order. Retrieval of one round fans out over a
thread pool; its results are reassembled in query order.
"""
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import logging

from lodestar.gateways.dispatch import GatewayError
from lodestar.gateways.instructions import InstructionRole
from lodestar.gateways.retrieval import fetch_ranked_pages, rank_pages
from lodestar.gateways.structured import Decision, ModelOutputError
from lodestar.knowledge.knowledge_base import kb_context_digest, kb_merge
from lodestar.utils.utils import WarningAdapter
from .state import MAX_QUERIES, EnrichedPrompt, QueryPlan, RunStatus, SufficiencyDecision

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())
LOG = WarningAdapter(LOG)

CAP_RATIONALE = 'round cap reached'

RunContext = namedtuple('RunContext', ['config', 'session', 'tracker', 'policy'])

_MODALITY_NOTES = {
    'both': '',
    'text': 'Only text queries are available in this setting. ',
    'image': 'Only image queries are available in this setting. ',
}


def _bullets(items):
    return '\n'.join(f'- {item}' for item in items) if items else '(none)'


def _require_status(state, status, operation):
    if state.status is not status:
        raise ValueError(f'{operation} needs a run in status {status.value}, not {state.status.value}.')


def _digest(ctx, kb):
    return kb_context_digest(kb, ctx.config.digest_max_chars)


def _unique_new(entries, kb):
    seen, result = set(), []
    for entry in entries:
        if entry.content_hash in kb or entry.content_hash in seen:
            continue
        seen.add(entry.content_hash)
        result.append(entry)
    return result


def bootstrap(ctx, state):
    """Search once with the raw prompt and merge the best pages, unfiltered, at round 0.

    Returns ``(kb, state)``. Search failures leave the knowledge base empty; a failing model call is fatal.
    """
    _require_status(state, RunStatus.Bootstrapping, 'bootstrap')
    prompt = state.prompt
    ctx.tracker.stage, ctx.tracker.round = 'Bootstrap', 0
    try:
        hits = ctx.session.search_text(prompt.text)
    except GatewayError as exc:
        LOG.warning('Bootstrap search for prompt %s failed, continuing without evidence: %s', prompt.id, exc)
        hits = []
    if not hits:
        LOG.warning('Bootstrap search for prompt %s returned no results.', prompt.id)
    texts = ctx.session.rank_and_fetch_pages(prompt, hits, keep=ctx.config.keep_pages, query=prompt.text,
                                             max_chars=ctx.config.excerpt_chars)
    kb = kb_merge(state.kb, texts, [], 0)
    LOG.info('Bootstrap of prompt %s added %d pages.', prompt.id, len(kb.texts))
    state = state.advance(RunStatus.Looping, kb=kb, bootstrap_ran=True)
    return kb, state


def plan_round(ctx, state):
    """Ask the model for sub-questions and queries of the next round. Returns ``(plan, state)``.

    Queries of a disabled modality are dropped and the plan is cut to five queries in listed order. The round
    counter advances even if no query remains.
    """
    _require_status(state, RunStatus.Looping, 'plan_round')
    round_ = state.round + 1
    context = {
        'prompt': state.prompt.text,
        'knowledge': _digest(ctx, state.kb),
        'questions': _bullets(state.pending_questions),
        'modality_note': _MODALITY_NOTES[ctx.config.modalities],
    }
    value, _ = ctx.session.model.invoke_structured(InstructionRole.QueryPlanning, context)

    text_queries, image_queries = list(value.text_queries), list(value.image_queries)
    if ctx.config.modalities == 'text':
        text_queries, image_queries = text_queries, []
    elif ctx.config.modalities == 'image':
        text_queries, image_queries = [], image_queries
    proposed = len(text_queries) + len(image_queries)
    if proposed > MAX_QUERIES:
        LOG.warning('Round %d planned %d queries, dispatching only the first %d.', round_, proposed, MAX_QUERIES)
        text_queries = text_queries[:MAX_QUERIES]
        image_queries = image_queries[:MAX_QUERIES - len(text_queries)]
    if not text_queries and not image_queries:
        LOG.info('Round %d planned no queries, skipping retrieval.', round_)

    plan = QueryPlan(tuple(value.sub_questions), tuple(text_queries), tuple(image_queries), round_)
    pending = list(state.pending_questions)
    pending.extend(question for question in value.sub_questions if question not in pending)
    return plan, state._replace(round=round_, pending_questions=tuple(pending))


def _search(session, kind, query):
    search = session.search_text if kind == 'text' else session.search_images
    try:
        return search(query)
    except GatewayError as exc:
        LOG.warning('Skipping %s query "%s": %s', kind, query, exc)
        return None


def retrieve_round(ctx, plan, prompt):
    """Run all queries of ``plan``. Returns ``(raw_texts, raw_images)`` concatenated in query order.

    Failed searches skip their query. Searches, page reads and image downloads run concurrently; the ranking model
    calls run one after another in query order.
    """
    if len(plan) == 0:
        raise ValueError('retrieve_round needs a plan with at least one query.')
    config, session = ctx.config, ctx.session
    jobs = [('text', query) for query in plan.text_queries] + [('image', query) for query in plan.image_queries]

    with ThreadPoolExecutor(max_workers=config.concurrency) as executor:
        hits = list(executor.map(lambda job: _search(session, *job), jobs))

        text_jobs = [(query, found) for (kind, query), found in zip(jobs, hits) if kind == 'text' and found]
        rankings = [rank_pages(session, prompt, found, query) for query, found in text_jobs]

        page_futures = [executor.submit(fetch_ranked_pages, session, found, ranking, config.keep_pages, query,
                                        config.excerpt_chars)
                        for (query, found), ranking in zip(text_jobs, rankings)]
        image_futures = [executor.submit(session.select_images, found, config.keep_images, query)
                         for (kind, query), found in zip(jobs, hits) if kind == 'image' and found]
        raw_texts = [text for future in page_futures for text in future.result()]
        raw_images = [image for future in image_futures for image in future.result()]

    LOG.info('Round %d retrieved %d pages and %d images.', plan.round, len(raw_texts), len(raw_images))
    return raw_texts, raw_images


def accumulate(ctx, state, raw_texts, raw_images):
    """Filter the raw evidence of the current round with the model and merge what it keeps.

    Texts are filtered first; the image filter then sees the knowledge base including the kept texts. Evidence
    already in the knowledge base is not offered again.
    """
    _require_status(state, RunStatus.Looping, 'accumulate')
    texts, images = _unique_new(raw_texts, state.kb), _unique_new(raw_images, state.kb)
    if 'accumulation' in ctx.config.ablations:
        return state._replace(kb=kb_merge(state.kb, texts, images, state.round))

    model = ctx.session.model
    kept_texts = []
    if texts:
        candidates = '\n'.join(f'[{i}] {text.content} (source: {text.source_url})'
                               for i, text in enumerate(texts, start=1))
        value, _ = model.invoke_structured(
            InstructionRole.TextFilter, {'prompt': state.prompt.text, 'candidates': candidates, 'count': len(texts)},
            validation_context={'count': len(texts)})
        kept_texts = [texts[i - 1] for i in value.keep]
    kb = kb_merge(state.kb, kept_texts, [], state.round)

    kept_images = []
    if images:
        candidates = '\n'.join(f'[{i}] {image.title} (source: {image.source_url})'
                               for i, image in enumerate(images, start=1))
        context = {'prompt': state.prompt.text, 'knowledge': _digest(ctx, kb), 'candidates': candidates,
                   'count': len(images)}
        value, _ = model.invoke_structured(InstructionRole.ImageFilter, context,
                                           images=[image.bytes_ref for image in images],
                                           validation_context={'count': len(images)})
        kept_images = [images[i - 1] for i in value.keep]
    kb = kb_merge(kb, [], kept_images, state.round)

    LOG.info('Round %d kept %d of %d pages and %d of %d images.', state.round, len(kept_texts), len(texts),
             len(kept_images), len(images))
    return state._replace(kb=kb)


def decide(ctx, state, retrieved=True):
    """Decide whether to run another round.

    Fixed policies decide by round count. The adaptive policy asks the model and falls back to Refine if the answer
    stays unusable. Whatever the policy, the decision is Refine once ``max_rounds`` rounds ran.
    """
    _require_status(state, RunStatus.Looping, 'decide')
    completed, max_rounds = state.round, ctx.config.max_rounds
    scheduled = ctx.policy.scheduled_decision(completed)
    if scheduled is not None and (scheduled is Decision.Refine or completed < max_rounds):
        return SufficiencyDecision(scheduled, f'{ctx.policy} after {completed} round(s)', completed, retrieved,
                                   'policy')
    if completed >= max_rounds:
        LOG.warning('Round cap of %d reached for prompt %s, continuing with refinement.', max_rounds, state.prompt.id)
        return SufficiencyDecision(Decision.Refine, CAP_RATIONALE, completed, retrieved, 'cap')

    context = {'prompt': state.prompt.text, 'knowledge': _digest(ctx, state.kb),
               'questions': _bullets(state.pending_questions)}
    try:
        value, _ = ctx.session.model.invoke_structured(InstructionRole.Sufficiency, context)
    except ModelOutputError as exc:
        LOG.warning('Unusable sufficiency decision in round %d (%s), continuing with refinement.', completed, exc)
        return SufficiencyDecision(Decision.Refine, 'unparseable decision', completed, retrieved, 'fallback')
    return SufficiencyDecision(value.decision, value.rationale, completed, retrieved, 'model')


def _compose_without_extension(prompt_text, textual_features, visual_features):
    parts = [prompt_text.strip()]
    if textual_features:
        parts.append('Facts: ' + '; '.join(textual_features))
    if visual_features:
        parts.append('Visual details: ' + '; '.join(visual_features))
    return '\n'.join(parts)


def _extend(ctx, prompt, textual_features, visual_features, refined_images):
    ctx.tracker.stage = 'PromptExtension'
    if 'extension' in ctx.config.ablations:
        return _compose_without_extension(prompt.text, textual_features, visual_features)
    context = {'prompt': prompt.text, 'textual_features': _bullets(textual_features),
               'visual_features': _bullets(visual_features), 'image_count': len(refined_images)}
    value, _ = ctx.session.model.invoke_structured(InstructionRole.PromptExtend, context,
                                                   images=[image.bytes_ref for image in refined_images])
    return value.prompt


def refine_and_extend(ctx, state):
    """Condense the knowledge base into features and reference images and write the enriched prompt."""
    _require_status(state, RunStatus.Refining, 'refine_and_extend')
    prompt, kb, model = state.prompt, state.kb, ctx.session.model
    ctx.tracker.stage = 'FineGrainedRefine'

    if 'refinement' in ctx.config.ablations:
        textual_features = [text.snippet.strip() for text in kb.texts if text.snippet.strip()]
        refined_images = list(kb.images[:ctx.config.keep_images])
        visual_features = []
    else:
        context = {'prompt': prompt.text, 'knowledge': _digest(ctx, kb), 'image_count': len(kb.images)}
        value, _ = model.invoke_structured(InstructionRole.ContentRefine, context,
                                           images=[image.bytes_ref for image in kb.images],
                                           validation_context={'image_count': len(kb.images)})
        textual_features = list(value.textual_features)
        refined_images = [kb.images[i - 1] for i in value.image_indices]
        visual_features = []
        if refined_images:
            context = {'prompt': prompt.text, 'textual_features': _bullets(textual_features),
                       'image_count': len(refined_images)}
            value, _ = model.invoke_structured(InstructionRole.VisualRefine, context,
                                               images=[image.bytes_ref for image in refined_images])
            visual_features = list(value.visual_features)

    prompt_text = _extend(ctx, prompt, textual_features, visual_features, refined_images)
    return EnrichedPrompt(prompt_text, textual_features, visual_features, refined_images, prompt.id)


def extend_without_evidence(ctx, state):
    """Extend the prompt from the model's own knowledge, without retrieved evidence."""
    _require_status(state, RunStatus.Refining, 'extend_without_evidence')
    return EnrichedPrompt(_extend(ctx, state.prompt, [], [], []), [], [], [], state.prompt.id)
