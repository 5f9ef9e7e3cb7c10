"""Gateways for web search, page reading and image download."""
from collections import namedtuple
import json
import logging

from .cassette import fingerprint
from .dispatch import BackendResponse

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

MAX_HITS = 10

SearchHit = namedtuple('SearchHit', ['rank', 'url', 'snippet', 'title', 'image_url'], defaults=('', '', None))
SearchHit.__doc__ = ('One search result. ``rank`` is 1-based. For image results ``url`` is the hosting page and '
                     '``image_url`` the image itself.')

PageContent = namedtuple('PageContent', ['url', 'text', 'retrieved_at'])


class SearchGateway():
    """Text and image search against one web search backend."""

    def __init__(self, backend, text_dispatcher, image_dispatcher, max_hits=MAX_HITS):
        self.backend = backend
        self.text_dispatcher = text_dispatcher
        self.image_dispatcher = image_dispatcher
        self.max_hits = max_hits

    def search_text(self, query):
        """Return at most ``max_hits`` text hits in backend rank order."""
        return self._search(self.text_dispatcher, 'search_text', query, required='url')

    def search_images(self, query):
        """Return at most ``max_hits`` image hits in backend rank order."""
        return self._search(self.image_dispatcher, 'search_images', query, required='image_url')

    def _search(self, dispatcher, method, query, required):
        if not isinstance(query, str) or not query.strip():
            raise ValueError('Search query must not be empty.')

        def call():
            # the backend is only resolved when the exchange is not served from the cassette
            results = [item for item in getattr(self.backend, method)(query) if item.get(required)]
            return BackendResponse(json.dumps(results, sort_keys=True).encode('utf-8'))

        entry = dispatcher.dispatch(fingerprint(dispatcher.service, None, query), f'{dispatcher.service}: {query}',
                                    call)
        items = json.loads(entry.payload.decode('utf-8'))[:self.max_hits]
        hits = [SearchHit(rank, item.get('url', ''), item.get('snippet', ''), item.get('title', ''),
                          item.get('image_url'))
                for rank, item in enumerate(items, start=1)]
        LOG.debug('%s "%s" returned %d hits.', dispatcher.service, query, len(hits))
        return hits


class ReaderGateway():
    """Fetch the readable text of web pages."""

    def __init__(self, backend, dispatcher):
        self.backend = backend
        self.dispatcher = dispatcher

    def read(self, url) -> PageContent:
        def call():
            return BackendResponse(self.backend.read(url).encode('utf-8'))

        entry = self.dispatcher.dispatch(fingerprint(self.dispatcher.service, None, url), f'read {url}', call)
        return PageContent(url, entry.payload.decode('utf-8'), entry.recorded_at)


class ImageFetchGateway():
    """Download image bytes."""

    def __init__(self, backend, dispatcher):
        self.backend = backend
        self.dispatcher = dispatcher

    def fetch(self, url) -> bytes:
        def call():
            return BackendResponse(self.backend.fetch(url))

        entry = self.dispatcher.dispatch(fingerprint(self.dispatcher.service, None, url), f'fetch {url}', call)
        return entry.payload
