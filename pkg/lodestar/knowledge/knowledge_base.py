"""The run-scoped knowledge base of filtered evidence."""
from types import MappingProxyType
import logging

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

DIGEST_HEADER = 'Knowledge base (retrieved evidence so far):\n'
MIN_DIGEST_CHARS = 256


class KnowledgeBase():
    """Immutable, insertion-ordered store of text and image evidence keyed by content hash.

    Use :meth:`merge` (or :func:`kb_merge`) to obtain an extended copy. Every entry carries the round in which it
    was added in ``round_added``.
    """

    __slots__ = ('_texts', '_images', '_round_added')

    def __init__(self, texts=(), images=(), round_added=None):
        self._texts = tuple(texts)
        self._images = tuple(images)
        self._round_added = MappingProxyType(dict(round_added or {}))
        hashes = [e.content_hash for e in self._texts] + [e.content_hash for e in self._images]
        if len(hashes) != len(set(hashes)):
            raise ValueError('Knowledge base entries must have distinct content hashes.')
        missing = [h for h in hashes if h not in self._round_added]
        if missing:
            raise ValueError(f'No round_added for entries {missing}.')
        extra = set(self._round_added) - set(hashes)
        if extra:
            raise ValueError(f'round_added references unknown entries {sorted(extra)}.')

    @property
    def texts(self):
        return self._texts

    @property
    def images(self):
        return self._images

    @property
    def round_added(self):
        return self._round_added

    def hashes(self):
        """Return the set of all content hashes."""
        return set(self._round_added)

    def __len__(self):
        return len(self._texts) + len(self._images)

    def __contains__(self, content_hash):
        return content_hash in self._round_added

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return (self._texts == other._texts and self._images == other._images
                and dict(self._round_added) == dict(other._round_added))

    def __hash__(self):
        return hash((self._texts, self._images))

    def __repr__(self):
        return f'KnowledgeBase(texts={len(self._texts)}, images={len(self._images)})'

    def merge(self, texts, images, round):
        """Return a new knowledge base with all entries not yet present appended at ``round``."""
        if round < 0:
            raise ValueError(f'Round must be >= 0, got {round}.')
        round_added = dict(self._round_added)
        new_texts, new_images = list(self._texts), list(self._images)
        for target, entries in ((new_texts, texts), (new_images, images)):
            for entry in entries:
                if entry.content_hash in round_added:
                    continue
                round_added[entry.content_hash] = round
                target.append(entry)
        added = len(round_added) - len(self._round_added)
        LOG.debug('Merged %d new entries into the knowledge base at round %d.', added, round)
        return KnowledgeBase(new_texts, new_images, round_added)

    def digest(self, max_chars):
        """Render the evidence for a model context of at most ``max_chars`` characters.

        Texts are listed first, then images, numbered by their position (``T1``, ``I1``, ...). If the rendering is too
        long, whole entries are dropped starting with the oldest round.
        """
        if max_chars < MIN_DIGEST_CHARS:
            raise ValueError(f'max_chars must be >= {MIN_DIGEST_CHARS}, got {max_chars}.')
        lines = {}
        for i, text in enumerate(self._texts, start=1):
            lines[('T', i)] = f'[T{i}] {text.content} (source: {text.source_url})\n'
        for i, image in enumerate(self._images, start=1):
            lines[('I', i)] = f'[I{i}] {image.title} (source: {image.source_url}, blob: {image.bytes_ref})\n'

        budget = max_chars - len(DIGEST_HEADER)
        total = sum(len(line) for line in lines.values())
        if total > budget:
            def eviction_key(key):
                kind, i = key
                entry = self._texts[i - 1] if kind == 'T' else self._images[i - 1]
                return self._round_added[entry.content_hash], kind == 'I', i

            dropped = 0
            for key in sorted(lines, key=eviction_key):
                if total <= budget:
                    break
                total -= len(lines.pop(key))
                dropped += 1
            LOG.debug('Dropped %d entries from the knowledge digest to fit %d characters.', dropped, max_chars)

        texts = [line for (kind, _), line in lines.items() if kind == 'T']
        images = [line for (kind, _), line in lines.items() if kind == 'I']
        return DIGEST_HEADER + ''.join(texts) + ''.join(images)


def kb_merge(kb, texts, images, round):
    """Return ``kb`` extended by the given evidence. Duplicates by content hash are dropped."""
    return kb.merge(texts, images, round)


def kb_context_digest(kb, max_chars):
    """Return the bounded, deterministic text rendering of ``kb``."""
    return kb.digest(max_chars)
