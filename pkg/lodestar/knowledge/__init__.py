"""
Knowledge package provides the domain types for prompts and evidence, the knowledge base and its persistence.

Classes are exported here, the merge, digest and persistence operations are available as functions.
"""

from .evidence import (UserPrompt, TextEvidence, ImageEvidence, GroundTruthFeature,  # noqa: F401
                       ENTITY_CLASSES, CONCEPTS, content_hash_text, content_hash_bytes)
from .knowledge_base import KnowledgeBase, kb_merge, kb_context_digest  # noqa: F401
from .persistence import BlobStore, kb_save, kb_load, PersistenceError, ManifestParseError  # noqa: F401
