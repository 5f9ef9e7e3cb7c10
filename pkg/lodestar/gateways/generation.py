"""Gateway for the image generator and the artifact it produces."""
from collections import namedtuple
import hashlib
import logging
import os

from lodestar._base import dumps_canonical, write_atomic, write_json
from lodestar.knowledge.evidence import content_hash_bytes
from lodestar.utils.utils import LodestarError
from .cassette import fingerprint
from .dispatch import BackendResponse, GatewayError

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

GeneratedImage = namedtuple('GeneratedImage', ['data', 'mime'])
GenerationArtifact = namedtuple('GenerationArtifact', ['path', 'manifest_path', 'prompt_hash', 'reference_hashes',
                                                       'size', 'mime'])

_EXTENSIONS = {'image/png': 'png', 'image/jpeg': 'jpg', 'image/webp': 'webp', 'image/gif': 'gif',
               'application/json': 'json'}


class GenerationError(LodestarError):
    """Raised when the image generator failed for good."""


def prompt_hash(text):
    """Return the hex SHA-256 of the exact prompt text."""
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


class StubImageGenerator():
    """Deterministic generator backend that echoes its inputs as a JSON manifest instead of drawing an image."""

    def __init__(self, settings=None):
        self.settings = settings or {}

    def generate(self, prompt, references):
        manifest = {'prompt_hash': prompt_hash(prompt),
                    'reference_hashes': [content_hash_bytes(reference) for reference in references]}
        return GeneratedImage(dumps_canonical(manifest).encode('utf-8'), 'application/json')


class ImageGenerationGateway():
    """Hand the enriched prompt and its reference images to the generator and save the artifact."""

    def __init__(self, backend, dispatcher, blobs):
        self.backend = backend
        self.dispatcher = dispatcher
        self.blobs = blobs

    def generate(self, enriched, out_dir) -> GenerationArtifact:
        """Generate an image for ``enriched`` and write it plus ``manifest.json`` to ``out_dir``."""
        text = enriched.prompt_text
        if not isinstance(text, str) or not text.strip():
            raise ValueError('The enriched prompt is empty.')
        references = [image.bytes_ref for image in enriched.refined_images]

        def call():
            result = self.backend.generate(text, [self.blobs.get(key) for key in references])
            return BackendResponse(result.data, meta={'mime': result.mime})

        request_fingerprint = fingerprint(self.dispatcher.service, None, text, references)
        try:
            entry = self.dispatcher.dispatch(request_fingerprint, f'generate {prompt_hash(text)[:12]}', call)
        except GatewayError as exc:
            raise GenerationError(f'Image generation failed: {exc}') from exc

        data, mime = entry.payload, entry.meta.get('mime', 'application/octet-stream')
        path = os.path.join(out_dir, f"image.{_EXTENSIONS.get(mime, 'bin')}")
        write_atomic(path, data)
        artifact = GenerationArtifact(path, os.path.join(out_dir, 'manifest.json'), prompt_hash(text), references,
                                      len(data), mime)
        write_json(artifact.manifest_path, {
            'file': os.path.basename(path),
            'mime': mime,
            'bytes': len(data),
            'prompt_hash': artifact.prompt_hash,
            'reference_hashes': references,
        })
        LOG.info('Wrote generated artifact %s (%d bytes).', path, len(data))
        return artifact
