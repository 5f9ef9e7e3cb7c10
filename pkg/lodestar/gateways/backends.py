"""
Live HTTP backends and the factory that resolves configured gateway bindings to backend objects.

A backend is any object with the methods the gateways call:

- model: ``complete(prompt, images) -> ModelReply``
- search: ``search_text(query)`` and ``search_images(query)``, each returning a list of dicts with the keys
  ``url``, ``title``, ``snippet`` and, for images, ``image_url``
- reader: ``read(url) -> str``
- image_fetch: ``fetch(url) -> bytes``
- image_generator: ``generate(prompt, references) -> GeneratedImage``
"""
import base64
import importlib
import io
import logging

from PIL import Image, UnidentifiedImageError

from lodestar.utils.config import API_KEY_ENV, ConfigError
from lodestar.utils.http_wrapper import get_service_client, RequestError
from .generation import GeneratedImage, StubImageGenerator
from .model import ModelReply

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())


def _client(binding, settings, **kwargs):
    return get_service_client(binding, api_key_env=API_KEY_ENV.get(binding), timeout=settings.get('timeout', 60),
                              **kwargs)


def _image_mime(data):
    try:
        with Image.open(io.BytesIO(data)) as image:
            return Image.MIME.get(image.format, 'application/octet-stream')
    except (UnidentifiedImageError, OSError):
        return 'application/octet-stream'


def _bad_response(msg, response):
    return RequestError(msg, 502, 'Bad Gateway', str(response)[:500])


def _expect_json(response, url):
    if not isinstance(response, dict):
        raise _bad_response(f'Expected a JSON object from {url}.', response)
    return response


def _field(response, url, path, expected):
    """Return the value at ``path`` (keys and list indexes) of a JSON response, checked against ``expected``."""
    value = response
    try:
        for key in path:
            value = value[key]
    except (KeyError, IndexError, TypeError):
        value = None
    if not isinstance(value, expected):
        location = '/'.join(str(key) for key in path)
        raise _bad_response(f'Response of {url} has no usable {location}.', response)
    return value


def _items(response, key, url):
    items = response.get(key) or []
    if not isinstance(items, list) or not all(isinstance(item, dict) for item in items):
        raise _bad_response(f'Response of {url} has a malformed {key} list.', response)
    return items


class ChatCompletionsBackend():
    """Reasoning model behind an OpenAI-compatible chat completions endpoint."""

    def __init__(self, settings, binding='model'):
        self.url = f"{settings['base_url'].rstrip('/')}/chat/completions"
        self.model = settings['model']
        self.temperature = settings.get('temperature', 0.2)
        self.client = _client(binding, settings)

    def complete(self, prompt, images):
        content = [{'type': 'text', 'text': prompt}]
        for data in images:
            encoded = base64.b64encode(data).decode('ascii')
            content.append({'type': 'image_url', 'image_url': {'url': f'data:{_image_mime(data)};base64,{encoded}'}})
        body = {'model': self.model, 'temperature': self.temperature,
                'messages': [{'role': 'user', 'content': content}]}
        response = _expect_json(self.client.request('POST', self.url, json=body), self.url)
        content = _field(response, self.url, ('choices', 0, 'message', 'content'), (str, type(None)))
        usage = response.get('usage')
        usage = usage if isinstance(usage, dict) else {}
        return ModelReply(content or '', usage.get('prompt_tokens'), usage.get('completion_tokens'))


class WebSearchBackend():
    """Web search JSON API with ``/search`` and ``/images`` endpoints."""

    def __init__(self, settings):
        self.base_url = settings['base_url'].rstrip('/')
        self.region = settings.get('region', 'us')
        self.language = settings.get('language', 'en')
        self.client = _client('search', settings, auth_header='X-API-KEY', auth_scheme=None)

    def _post(self, endpoint, query):
        body = {'q': query, 'gl': self.region, 'hl': self.language, 'num': 10}
        return _expect_json(self.client.request('POST', f'{self.base_url}/{endpoint}', json=body), endpoint)

    def search_text(self, query):
        return [{'url': item.get('link'), 'title': item.get('title', ''), 'snippet': item.get('snippet', '')}
                for item in _items(self._post('search', query), 'organic', 'search')]

    def search_images(self, query):
        return [{'url': item.get('link'), 'title': item.get('title', ''), 'snippet': '',
                 'image_url': item.get('imageUrl')}
                for item in _items(self._post('images', query), 'images', 'images')]


class PageReaderBackend():
    """Page-to-markdown reader service addressed as ``GET <base_url>/<page url>``."""

    def __init__(self, settings):
        self.base_url = settings['base_url'].rstrip('/')
        self.client = _client('reader', settings)

    def read(self, url):
        content = self.client.request('GET', f'{self.base_url}/{url}', headers={'Accept': 'text/plain'})
        if isinstance(content, dict):
            return _field(content, url, ('data', 'content'), str)
        return content.decode('utf-8', errors='replace')


class ImageDownloadBackend():
    """Plain HTTP download of image URLs."""

    def __init__(self, settings):
        self.client = _client('image_fetch', settings)

    def fetch(self, url):
        content = self.client.request('GET', url, headers={'Accept': 'image/*'})
        if isinstance(content, dict):
            raise RequestError(f'{url} returned JSON instead of an image.', 415, 'Unsupported Media Type', '')
        return content


class ImageGenerationBackend():
    """Image generation endpoint accepting a prompt plus base64 reference images and returning base64 images."""

    def __init__(self, settings):
        self.url = f"{settings['base_url'].rstrip('/')}/images/generations"
        self.model = settings.get('model')
        self.client = _client('image_generator', settings)

    def generate(self, prompt, references):
        body = {'model': self.model, 'prompt': prompt, 'response_format': 'b64_json',
                'reference_images': [base64.b64encode(data).decode('ascii') for data in references]}
        response = _expect_json(self.client.request('POST', self.url, json=body), self.url)
        data = base64.b64decode(_field(response, self.url, ('data', 0, 'b64_json'), str))
        return GeneratedImage(data, _image_mime(data))


_HTTP_BACKENDS = {
    'model': ChatCompletionsBackend,
    'judge': lambda settings: ChatCompletionsBackend(settings, binding='judge'),
    'search': WebSearchBackend,
    'reader': PageReaderBackend,
    'image_fetch': ImageDownloadBackend,
    'image_generator': ImageGenerationBackend,
}


def create_backend(binding, settings):
    """Create the backend of a gateway binding.

    ``settings['backend']`` is ``'http'`` for the live service, ``'stub'`` for the echoing image generator, or
    ``'package.module:factory'`` for a callable that receives the settings dict.
    """
    kind = settings.get('backend', 'http')
    if kind == 'http':
        if not settings.get('base_url') and binding not in ('image_fetch',):
            raise ConfigError(f"Gateway binding '{binding}' needs a base_url for the http backend.")
        return _HTTP_BACKENDS[binding](settings)
    if kind == 'stub':
        if binding != 'image_generator':
            raise ConfigError(f"Only the image_generator binding has a stub backend, not '{binding}'.")
        return StubImageGenerator(settings)
    module_name, sep, attribute = kind.partition(':')
    if not sep:
        raise ConfigError(f"Unknown backend '{kind}' for binding '{binding}'. Use 'http', 'stub' or 'module:attr'.")
    try:
        factory = getattr(importlib.import_module(module_name), attribute)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"Can not load backend '{kind}' for binding '{binding}': {exc}") from exc
    LOG.debug('Using custom backend %s for %s.', kind, binding)
    return factory(settings)
