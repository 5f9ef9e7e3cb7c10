"""
Evidence module can be used to create and validate prompts, retrieved evidence and ground-truth features.

All types are immutable named tuples. Evidence identity is a SHA-256 digest: normalized content for text,
raw bytes for images.
"""
from collections import namedtuple
import hashlib

from furl import furl

ENTITY_CLASSES = ('Animal', 'Sports', 'Transportation', 'Landmarks', 'Food',
                  'People', 'Plants', 'Products', 'Culture', 'Events')
CONCEPTS = ('PF', 'CC', 'TC')


def normalize_text(text: str) -> str:
    """Lowercase ``text`` and collapse all whitespace runs into single spaces."""
    return ' '.join(text.lower().split())


def content_hash_text(text: str) -> str:
    """Return the hex SHA-256 digest of the normalized text."""
    return hashlib.sha256(normalize_text(text).encode('utf-8')).hexdigest()


def content_hash_bytes(data: bytes) -> str:
    """Return the hex SHA-256 digest of raw bytes."""
    return hashlib.sha256(data).hexdigest()


def is_well_formed_url(url) -> bool:
    """Return True for absolute http(s) URLs with a host."""
    try:
        parsed = furl(url)
    except ValueError:
        return False
    return parsed.scheme in ('http', 'https') and bool(parsed.host)


def _check_concept(concept):
    if concept not in CONCEPTS:
        raise ValueError(f"Unknown concept '{concept}'. Known concepts: {CONCEPTS}")


class UserPrompt(namedtuple('UserPrompt', ['id', 'text', 'entity_class', 'concept_tags'])):
    """A prompt submitted for factual image generation."""

    def __new__(cls, id, text, entity_class=None, concept_tags=()):
        if not isinstance(text, str) or not text.strip():
            raise ValueError(f"Prompt '{id}' has no text.")
        if entity_class is not None and entity_class not in ENTITY_CLASSES:
            raise ValueError(f"Unknown entity class '{entity_class}'. Known classes: {ENTITY_CLASSES}")
        concept_tags = frozenset(concept_tags or ())
        for concept in concept_tags:
            _check_concept(concept)
        return super().__new__(cls, str(id), text, entity_class, concept_tags)

    def to_dict(self):
        return {'id': self.id, 'text': self.text, 'entity_class': self.entity_class,
                'concept_tags': sorted(self.concept_tags)}

    @classmethod
    def from_dict(cls, data):
        return cls(data['id'], data['text'], data.get('entity_class'), data.get('concept_tags') or ())


class TextEvidence(namedtuple('TextEvidence', ['content', 'source_url', 'snippet', 'retrieved_at',
                                               'query_of_origin', 'content_hash'])):
    """A page of text retrieved from the web, with provenance."""

    @classmethod
    def create(cls, content, source_url, snippet, retrieved_at, query_of_origin):
        """Create evidence and compute its content hash."""
        if not is_well_formed_url(source_url):
            raise ValueError(f"Malformed source url '{source_url}'.")
        return cls(content, source_url, snippet, retrieved_at, query_of_origin, content_hash_text(content))

    def to_dict(self):
        return self._asdict()

    @classmethod
    def from_dict(cls, data):
        return cls(*(data[field] for field in cls._fields))


class ImageEvidence(namedtuple('ImageEvidence', ['bytes_ref', 'title', 'source_url', 'query_of_origin',
                                                 'content_hash', 'mime', 'width', 'height'])):
    """An image retrieved from the web. The bytes live in a :class:`~lodestar.knowledge.persistence.BlobStore`."""

    @classmethod
    def create(cls, data, title, source_url, query_of_origin, mime, width, height):
        """Create evidence for downloaded image bytes. The blob key is the content hash."""
        if not is_well_formed_url(source_url):
            raise ValueError(f"Malformed source url '{source_url}'.")
        if width <= 0 or height <= 0:
            raise ValueError(f'Image from {source_url} has invalid size {width}x{height}.')
        key = content_hash_bytes(data)
        return cls(key, title, source_url, query_of_origin, key, mime, int(width), int(height))

    def to_dict(self):
        return self._asdict()

    @classmethod
    def from_dict(cls, data):
        return cls(*(data[field] for field in cls._fields))


class GroundTruthFeature(namedtuple('GroundTruthFeature', ['id', 'statement', 'concept'])):
    """A human-annotated fact a generated image is expected to show."""

    def __new__(cls, id, statement, concept):
        if not isinstance(statement, str) or not statement.strip():
            raise ValueError(f"Feature '{id}' has an empty statement.")
        _check_concept(concept)
        return super().__new__(cls, str(id), statement, concept)
