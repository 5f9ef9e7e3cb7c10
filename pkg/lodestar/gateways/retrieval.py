"""
Selection of pages and images from search hits.

Pages are ranked once by the model; dead links are replaced by the next page of that ranking. Images are taken in
search rank order, keeping the first ones that download, decode and are new by content hash.
"""
import io
import logging

from PIL import Image, UnidentifiedImageError

from lodestar.knowledge.evidence import ImageEvidence, TextEvidence, content_hash_bytes
from lodestar.utils.utils import NoEvidenceWarning, WarningAdapter
from .dispatch import GatewayError
from .instructions import InstructionRole

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())
LOG = WarningAdapter(LOG)


def _render_hits(hits):
    return '\n'.join(f'{hit.rank}. {hit.title} | {hit.snippet} | {hit.url}' for hit in hits)


def rank_pages(session, prompt, hits, query):
    """Ask the model for a relevance ranking of the hits. Returns 1-based hit ranks, most relevant first."""
    if not hits:
        return []
    context = {'prompt': prompt.text, 'query': query, 'snippets': _render_hits(hits), 'count': len(hits)}
    value, _ = session.model.invoke_structured(InstructionRole.Bootstrap, context,
                                               validation_context={'count': len(hits)})
    return value.ranking


def fetch_ranked_pages(session, hits, ranking, keep, query, max_chars=None):
    """Read pages in ``ranking`` order until ``keep`` pages were read. Unreadable pages are skipped."""
    if keep < 1:
        raise ValueError(f'keep must be >= 1, got {keep}.')
    by_rank = {hit.rank: hit for hit in hits}
    texts = []
    for rank in ranking:
        if len(texts) == keep:
            break
        hit = by_rank[rank]
        try:
            page = session.reader.read(hit.url)
        except GatewayError as exc:
            LOG.info('Skipping page %s of query "%s": %s', hit.url, query, exc)
            continue
        content = page.text.strip()
        if not content:
            LOG.info('Skipping page %s of query "%s": no readable text.', hit.url, query)
            continue
        if max_chars is not None:
            content = content[:max_chars]
        try:
            texts.append(TextEvidence.create(content, hit.url, hit.snippet, page.retrieved_at, query))
        except ValueError as exc:
            LOG.info('Skipping page of query "%s": %s', query, exc)

    if ranking and not texts:
        LOG.log_with_warning(f'None of the ranked pages for query "{query}" could be read.',
                             warning_category=NoEvidenceWarning)
    return texts


def rank_and_fetch_pages(session, prompt, hits, keep=2, query=None, max_chars=None):
    """Return up to ``keep`` pages of the hits, as ranked by the model, with dead-link substitution."""
    if keep < 1:
        raise ValueError(f'keep must be >= 1, got {keep}.')
    if not hits:
        return []
    query = prompt.text if query is None else query
    ranking = rank_pages(session, prompt, hits, query)
    return fetch_ranked_pages(session, hits, ranking, keep, query, max_chars)


def _decode(data):
    with Image.open(io.BytesIO(data)) as image:
        image.load()
        return Image.MIME.get(image.format, 'application/octet-stream'), image.width, image.height


def select_images(session, hits, keep=5, query=None):
    """Return the first ``keep`` accessible, decodable and unique images in rank order, stored in the blob store."""
    if keep < 1:
        raise ValueError(f'keep must be >= 1, got {keep}.')
    images, seen = [], set()
    for hit in sorted(hits, key=lambda h: h.rank):
        if len(images) == keep:
            break
        try:
            data = session.image_fetch.fetch(hit.image_url)
        except GatewayError as exc:
            LOG.info('Dropping image %s (rank %d): %s', hit.image_url, hit.rank, exc)
            continue
        if not data:
            LOG.info('Dropping image %s (rank %d): empty response.', hit.image_url, hit.rank)
            continue
        key = content_hash_bytes(data)
        if key in seen:
            LOG.info('Dropping image %s (rank %d): duplicate of an earlier image.', hit.image_url, hit.rank)
            continue
        try:
            mime, width, height = _decode(data)
        except (UnidentifiedImageError, OSError, Image.DecompressionBombError) as exc:
            LOG.info('Dropping image %s (rank %d): not decodable (%s).', hit.image_url, hit.rank, exc)
            continue
        try:
            evidence = ImageEvidence.create(data, hit.title, hit.image_url, query or '', mime, width, height)
        except ValueError as exc:
            LOG.info('Dropping image of rank %d: %s', hit.rank, exc)
            continue
        seen.add(key)
        session.blobs.put(data)
        images.append(evidence)

    if hits and not images:
        LOG.log_with_warning(f'None of the image results for query "{query}" could be used.',
                             warning_category=NoEvidenceWarning)
    return images
