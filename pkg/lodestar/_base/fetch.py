"""Retry loop shared by all gateways talking to remote services."""
import logging
import time

import requests

from lodestar.utils.http_wrapper import RequestError
from lodestar.utils.utils import WarningAdapter

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())
LOG = WarningAdapter(LOG)

# safeguard against retry limits that are configured too generously
_CALL_RETRY_LIMIT = 10
RETRYABLE_EXCEPTIONS = (RequestError, requests.ConnectionError, requests.Timeout)


def make_error_handler(base_delay=1.0, sleep=time.sleep):
    """Return an error handler that retries rate limits, server errors and connection problems.

    The handler accepts (exception, retry_count) and decides based on this input whether to retry the last
    request (return after sleeping) or re-raise the error. Client errors other than 429 are never retried.
    """
    def handler(exc, retry_count):
        if isinstance(exc, RequestError) and exc.status_code != 429 and exc.status_code < 500:
            raise exc
        delay = base_delay * 2 ** (retry_count - 1)
        LOG.debug('Request failed (%s), retry %d in %.1fs.', exc, retry_count, delay)
        sleep(delay)
    return handler


def call_with_retries(call, error_handler, retry_limit):
    """Run ``call`` until it succeeds or the retry budget is spent.

    ``retry_limit`` is the total number of attempts. Returns ``(result, attempts)``. The last exception is re-raised
    once the budget is exhausted or when ``error_handler`` decides not to retry.
    """
    retry_limit = min(retry_limit, _CALL_RETRY_LIMIT)
    attempts = 0
    while True:
        attempts += 1
        try:
            return call(), attempts
        except RETRYABLE_EXCEPTIONS as exc:
            exc.attempts = attempts
            if attempts >= retry_limit:
                raise
            error_handler(exc, attempts)
