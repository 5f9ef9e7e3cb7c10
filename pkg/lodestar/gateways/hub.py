"""Shared backends and rate limits, and the per-run gateway sessions built on them."""
import logging
import threading
import time

from lodestar._base import make_error_handler
from lodestar.utils.config import ConfigError
from .backends import create_backend
from .cassette import Cassette, CassetteMode
from .dispatch import Dispatcher
from .generation import ImageGenerationGateway
from .model import ModelGateway
from .retrieval import rank_and_fetch_pages, select_images
from .web import SearchGateway, ReaderGateway, ImageFetchGateway
from .rate_limit import RateLimiter

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

# cassette service -> gateway binding whose backend and rate limit it uses
SERVICE_BINDINGS = {
    'text_search': 'search',
    'image_search': 'search',
    'page_reader': 'reader',
    'image_fetch': 'image_fetch',
    'image_generator': 'image_generator',
}


class GatewayHub():
    """Owns one backend and one rate limiter per gateway binding.

    Concurrent pipelines take their gateways from :meth:`session`, so they share rate limits while recording into
    their own cassettes. ``backends`` maps binding names to ready backend objects and takes precedence over the
    configured bindings.
    """

    def __init__(self, config, backends=None, error_handler=None, clock=time.monotonic, sleep=time.sleep):
        self.config = config
        self.settings = config.gateways
        self.error_handler = error_handler or make_error_handler()
        self._backends = dict(backends or {})
        self._lock = threading.Lock()
        self._limiters = {binding: RateLimiter(settings.get('rate_limit'), clock=clock, sleep=sleep)
                          for binding, settings in self.settings.items()}

    def backend(self, binding):
        """Return the backend of ``binding``, creating it on first use."""
        with self._lock:
            if binding not in self._backends:
                if binding not in self.settings:
                    raise ConfigError(f"No gateway binding '{binding}' configured.")
                self._backends[binding] = create_backend(binding, self.settings[binding])
            return self._backends[binding]

    def limiter(self, binding):
        return self._limiters[binding]

    def session(self, cassette, blobs, model_binding='model'):
        """Return the gateways of one run, recording into or replaying from ``cassette``."""
        return GatewaySession(self, cassette, blobs, model_binding)


class GatewaySession():
    """The gateways of one run. Backends are resolved lazily, so replayed runs never create live clients."""

    def __init__(self, hub, cassette, blobs, model_binding='model'):
        self.hub = hub
        self.cassette = cassette if cassette is not None else Cassette(mode=CassetteMode.Passthrough)
        self.blobs = blobs
        self.model_binding = model_binding
        self._listeners = []
        self.model = ModelGateway(_LazyBackend(hub, model_binding), self._dispatcher('model', model_binding), blobs)
        self.search = SearchGateway(_LazyBackend(hub, 'search'), self._dispatcher('text_search'),
                                    self._dispatcher('image_search'))
        self.reader = ReaderGateway(_LazyBackend(hub, 'reader'), self._dispatcher('page_reader'))
        self.image_fetch = ImageFetchGateway(_LazyBackend(hub, 'image_fetch'), self._dispatcher('image_fetch'))
        self.generator = ImageGenerationGateway(_LazyBackend(hub, 'image_generator'),
                                                self._dispatcher('image_generator'), blobs)

    def _dispatcher(self, service, binding=None):
        binding = binding or SERVICE_BINDINGS[service]
        return Dispatcher(service, self.cassette, self.hub.limiter(binding), self.hub.config.retry_limit,
                          self.hub.error_handler, listener=self._notify)

    def add_listener(self, listener):
        """Register a callable that receives every cassette entry produced by this session."""
        self._listeners.append(listener)

    def _notify(self, entry):
        for listener in self._listeners:
            listener(entry)

    def model_invoke(self, role, context, images=()):
        return self.model.invoke(role, context, images)

    def search_text(self, query):
        return self.search.search_text(query)

    def search_images(self, query):
        return self.search.search_images(query)

    def rank_and_fetch_pages(self, prompt, hits, keep=2, query=None, max_chars=None):
        return rank_and_fetch_pages(self, prompt, hits, keep, query, max_chars)

    def select_images(self, hits, keep=5, query=None):
        return select_images(self, hits, keep, query)

    def generate_image(self, enriched, out_dir):
        return self.generator.generate(enriched, out_dir)


class _LazyBackend():
    def __init__(self, hub, binding):
        self._hub = hub
        self._binding = binding

    def __getattr__(self, name):
        return getattr(self._hub.backend(self._binding), name)
