"""Gateway for the reasoning model."""
from collections import namedtuple
import logging

from lodestar.utils.utils import WarningAdapter, whitespace_token_count
from .cassette import fingerprint
from .dispatch import BackendResponse
from .structured import ModelOutputError, parse_structured

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())
LOG = WarningAdapter(LOG)

TOKEN_ESTIMATOR = 'whitespace'
CORRECTION_NOTE = ('\n\nYour previous answer could not be used ({error}). '
                   'Answer again with a single JSON object in exactly the requested format.')

ModelReply = namedtuple('ModelReply', ['text', 'input_tokens', 'output_tokens'], defaults=(None, None))
ModelReply.__doc__ = 'What a model backend returns. Token counts are optional.'

ModelExchange = namedtuple('ModelExchange', ['role', 'rendered_prompt', 'attached_image_keys', 'raw_response',
                                             'input_tokens', 'output_tokens', 'latency_ms', 'attempts'])


def _shorten(text, width=120):
    text = ' '.join(text.split())
    return text if len(text) <= width else text[:width - 3] + '...'


class ModelGateway():
    """Invoke the reasoning model with rendered instruction templates and attached image blobs."""

    def __init__(self, backend, dispatcher, blobs):
        self.backend = backend
        self.dispatcher = dispatcher
        self.blobs = blobs

    def invoke(self, role, context, images=()):
        """Render the template of ``role`` with ``context`` and invoke the model. Returns a :class:`ModelExchange`."""
        return self.invoke_rendered(role, role.render(**context), images)

    def invoke_rendered(self, role, rendered, images=()):
        """Invoke the model with an already rendered prompt."""
        images = list(images)
        request_fingerprint = fingerprint(self.dispatcher.service, role.value, rendered, images)

        def call():
            reply = self.backend.complete(rendered, [self.blobs.get(key) for key in images])
            if isinstance(reply, str):
                reply = ModelReply(reply)
            estimated = reply.input_tokens is None or reply.output_tokens is None
            tokens_in = whitespace_token_count(rendered) if reply.input_tokens is None else reply.input_tokens
            tokens_out = whitespace_token_count(reply.text) if reply.output_tokens is None else reply.output_tokens
            meta = {'token_source': TOKEN_ESTIMATOR if estimated else 'backend'}
            return BackendResponse(reply.text.encode('utf-8'), tokens_in, tokens_out, meta)

        entry = self.dispatcher.dispatch(request_fingerprint, f'{role.value}: {_shorten(rendered)}', call,
                                         meta={'role': role.value, 'images': images})
        return ModelExchange(role, rendered, tuple(images), entry.payload.decode('utf-8'), entry.tokens_in,
                             entry.tokens_out, entry.latency_ms, entry.meta.get('attempts', 1))

    def invoke_structured(self, role, context, images=(), validation_context=None, parser=None):
        """Invoke the model and parse its answer, re-asking once if the answer can not be used.

        ``parser`` defaults to :func:`~lodestar.gateways.structured.parse_structured` with the schema of ``role``.
        Returns ``(value, exchanges)``. The error of the second attempt is raised if that one fails as well.
        """
        if parser is None:
            def parser(raw):
                return parse_structured(raw, role.schema, validation_context)

        rendered = role.render(**context)
        exchange = self.invoke_rendered(role, rendered, images)
        try:
            return parser(exchange.raw_response), [exchange]
        except ModelOutputError as exc:
            LOG.warning('Unusable %s answer (%s), asking again.', role.value, exc)
            retry = self.invoke_rendered(role, rendered + CORRECTION_NOTE.format(error=exc), images)
            return parser(retry.raw_response), [exchange, retry]
