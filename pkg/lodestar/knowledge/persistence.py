"""Persistence of knowledge bases and content-addressed image blobs."""
import json
import logging
import os
import re
import shutil
import threading

from cachetools import LRUCache, cachedmethod

from lodestar._base import write_atomic, write_json
from lodestar.utils.utils import LodestarError
from .evidence import TextEvidence, ImageEvidence, content_hash_bytes, content_hash_text
from .knowledge_base import KnowledgeBase

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

MANIFEST_SCHEMA_VERSION = 1
MANIFEST_NAME = 'manifest.json'
BLOB_DIR = 'blobs'
_BLOB_KEY_PATTERN = re.compile(r'^[0-9a-f]{64}$')


class PersistenceError(LodestarError):
    """Raised when a knowledge base or blob can not be written or read."""

    def __init__(self, msg, path):
        super().__init__(msg)
        self.path = path


class ManifestParseError(PersistenceError):
    """Raised when a knowledge base manifest is malformed. ``field`` names the offending field."""

    def __init__(self, msg, path, field):
        super().__init__(msg, path)
        self.field = field


class BlobStore():
    """Content-addressed store for image bytes. The key of a blob is the hex SHA-256 of its bytes."""

    def __init__(self, root):
        self.root = os.path.abspath(root)
        self._cache = LRUCache(maxsize=64)
        self._cache_lock = threading.Lock()

    def path(self, key):
        if not _BLOB_KEY_PATTERN.match(key):
            raise ValueError(f"Invalid blob key '{key}'.")
        return os.path.join(self.root, key)

    def __contains__(self, key):
        return os.path.exists(self.path(key))

    def put(self, data: bytes) -> str:
        """Store ``data`` and return its key. Storing the same bytes twice is a no-op."""
        key = content_hash_bytes(data)
        path = self.path(key)
        if not os.path.exists(path):
            try:
                write_atomic(path, data)
            except OSError as exc:
                raise PersistenceError(f'Could not write blob {key}: {exc}', path) from exc
        return key

    @cachedmethod(lambda self: self._cache, lock=lambda self: self._cache_lock)
    def get(self, key) -> bytes:
        path = self.path(key)
        try:
            with open(path, 'rb') as f:
                return f.read()
        except OSError as exc:
            raise PersistenceError(f'Could not read blob {key}: {exc}', path) from exc

    def copy_to(self, key, other):
        """Copy one blob into another store, unless it is already there."""
        target = other.path(key)
        if os.path.exists(target):
            return
        try:
            os.makedirs(other.root, exist_ok=True)
            shutil.copyfile(self.path(key), target)
        except OSError as exc:
            raise PersistenceError(f'Could not copy blob {key} to {other.root}: {exc}', target) from exc


def kb_save(kb, path, blobs=None):
    """Write ``kb`` to the directory ``path`` as ``manifest.json`` plus a ``blobs`` directory.

    Image blobs are copied from ``blobs`` when given; otherwise they must already be present under ``path``.
    """
    target_blobs = BlobStore(os.path.join(path, BLOB_DIR))
    manifest = {
        'schema_version': MANIFEST_SCHEMA_VERSION,
        'texts': [text.to_dict() for text in kb.texts],
        'images': [image.to_dict() for image in kb.images],
        'round_added': dict(kb.round_added),
    }
    try:
        os.makedirs(target_blobs.root, exist_ok=True)
        for image in kb.images:
            if blobs is not None and blobs.root != target_blobs.root:
                blobs.copy_to(image.bytes_ref, target_blobs)
            elif image.bytes_ref not in target_blobs:
                raise PersistenceError(f'Blob {image.bytes_ref} missing for image from {image.source_url}.',
                                       target_blobs.path(image.bytes_ref))
        write_json(os.path.join(path, MANIFEST_NAME), manifest)
    except OSError as exc:
        raise PersistenceError(f'Could not save knowledge base to {path}: {exc}', path) from exc
    LOG.debug('Saved %r to %s.', kb, path)


def _parse_entries(raw, field, entry_type, manifest_path):
    if not isinstance(raw, list):
        raise ManifestParseError(f"Field '{field}' must be a list.", manifest_path, field)
    entries = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ManifestParseError(f"Entry {field}[{i}] must be an object.", manifest_path, f'{field}[{i}]')
        try:
            entries.append(entry_type.from_dict(item))
        except KeyError as exc:
            name = f'{field}[{i}].{exc.args[0]}'
            raise ManifestParseError(f"Missing field '{name}'.", manifest_path, name) from exc
    return entries


def kb_load(path):
    """Read a knowledge base written by :func:`kb_save`."""
    manifest_path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            raw = f.read()
    except OSError as exc:
        raise PersistenceError(f'Could not read knowledge base manifest {manifest_path}: {exc}', manifest_path) \
            from exc
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f'Manifest {manifest_path} is not valid JSON: {exc}', manifest_path,
                                 'manifest') from exc
    if not isinstance(manifest, dict):
        raise ManifestParseError('Manifest must be a JSON object.', manifest_path, 'manifest')

    for field in ('schema_version', 'texts', 'images', 'round_added'):
        if field not in manifest:
            raise ManifestParseError(f"Manifest lacks field '{field}'.", manifest_path, field)
    if manifest['schema_version'] != MANIFEST_SCHEMA_VERSION:
        raise ManifestParseError(f"Unsupported schema_version {manifest['schema_version']!r}.", manifest_path,
                                 'schema_version')

    texts = _parse_entries(manifest['texts'], 'texts', TextEvidence, manifest_path)
    images = _parse_entries(manifest['images'], 'images', ImageEvidence, manifest_path)
    for i, text in enumerate(texts):
        if content_hash_text(text.content) != text.content_hash:
            raise ManifestParseError(f'Content hash of texts[{i}] does not match its content.', manifest_path,
                                     f'texts[{i}].content_hash')

    round_added = manifest['round_added']
    if not isinstance(round_added, dict) or not all(isinstance(v, int) and v >= 0 for v in round_added.values()):
        raise ManifestParseError("Field 'round_added' must map hashes to rounds >= 0.", manifest_path, 'round_added')
    try:
        kb = KnowledgeBase(texts, images, round_added)
    except ValueError as exc:
        raise ManifestParseError(str(exc), manifest_path, 'round_added') from exc

    blobs = BlobStore(os.path.join(path, BLOB_DIR))
    for i, image in enumerate(images):
        if not isinstance(image.bytes_ref, str) or not _BLOB_KEY_PATTERN.match(image.bytes_ref):
            raise ManifestParseError(f'Invalid blob key in images[{i}].', manifest_path, f'images[{i}].bytes_ref')
        if image.bytes_ref not in blobs:
            raise PersistenceError(f'Blob {image.bytes_ref} referenced by the manifest is missing.',
                                   blobs.path(image.bytes_ref))
    return kb
