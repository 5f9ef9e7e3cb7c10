"""Runs a single backend call through rate limiting, retries and the cassette."""
from collections import namedtuple
import logging
import time

import requests

from lodestar._base import call_with_retries
from lodestar.utils.timestamps import _utc_now_isoformat
from lodestar.utils.utils import LodestarError, WarningAdapter
from .cassette import CassetteEntry, CassetteMode

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())
LOG = WarningAdapter(LOG)

BackendResponse = namedtuple('BackendResponse', ['payload', 'tokens_in', 'tokens_out', 'meta'],
                             defaults=(0, 0, None))
BackendResponse.__doc__ = 'Raw result of one backend call. ``payload`` is bytes.'


class GatewayError(LodestarError):
    """Raised when a service call failed for good, after retries or as recorded in a replayed cassette."""

    def __init__(self, msg, service, attempts=0, status_code=None):
        super().__init__(msg)
        self.service = service
        self.attempts = attempts
        self.status_code = status_code


class Dispatcher():
    """Dispatch requests of one service.

    In record and passthrough mode the call runs against the backend through the rate limiter with retries; the
    exchange is appended to the cassette in record mode. In replay mode the response comes from the cassette.
    ``listener`` is called with every resulting :class:`CassetteEntry`, also for failures.
    """

    def __init__(self, service, cassette, limiter, retry_limit, error_handler, listener=None):
        self.service = service
        self.cassette = cassette
        self.limiter = limiter
        self.retry_limit = retry_limit
        self.error_handler = error_handler
        self.listener = listener

    def dispatch(self, fingerprint, request_digest, call, meta=None):
        """Return the :class:`CassetteEntry` for a request, raising :class:`GatewayError` on failure."""
        if self.cassette.mode is CassetteMode.Replay:
            entry = self.cassette.lookup(self.service, fingerprint)
            attempts = entry.meta.get('attempts', 1)
        else:
            entry, attempts = self._call_backend(fingerprint, request_digest, call, meta)
            if self.cassette.mode is CassetteMode.Record:
                self.cassette.record(entry)

        if self.listener is not None:
            self.listener(entry)

        if entry.status != 'ok':
            error = entry.meta.get('error', 'unknown error')
            raise GatewayError(f'{self.service} request failed after {attempts} attempt(s): {error}',
                               self.service, attempts, entry.meta.get('status_code'))
        return entry

    def _call_backend(self, fingerprint, request_digest, call, meta):
        meta = dict(meta or {})

        def limited_call():
            if self.limiter is not None:
                self.limiter.acquire()
            return call()

        start = time.perf_counter()
        try:
            response, attempts = call_with_retries(limited_call, self.error_handler, self.retry_limit)
        except (LodestarError, requests.RequestException, ValueError) as exc:
            latency_ms = round((time.perf_counter() - start) * 1000)
            attempts = self._attempts_of(exc)
            LOG.debug('%s request %s failed: %s', self.service, request_digest, exc)
            meta.update({'attempts': attempts, 'error': f'{type(exc).__name__}: {exc}',
                         'status_code': getattr(exc, 'status_code', None)})
            entry = CassetteEntry.create(self.service, fingerprint, request_digest, b'', latency_ms=latency_ms,
                                         recorded_at=_utc_now_isoformat(), meta=meta, status='error')
            return entry, attempts

        latency_ms = round((time.perf_counter() - start) * 1000)
        meta.update(response.meta or {})
        meta['attempts'] = attempts
        entry = CassetteEntry.create(self.service, fingerprint, request_digest, response.payload,
                                     response.tokens_in, response.tokens_out, latency_ms, _utc_now_isoformat(), meta)
        return entry, attempts

    def _attempts_of(self, exc):
        return getattr(exc, 'attempts', None) or 1
