"""Stores and returns service clients."""
import logging
import threading

from .service_client import ServiceClient

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

_clients = {}
_lock = threading.Lock()


def get_service_client(name, **kwargs) -> ServiceClient:
    """Return an existing service client or create a new one based on the name.

    Keyword arguments are only used when the client is created.
    """
    with _lock:
        if name in _clients:
            return _clients[name]

        LOG.debug("Creating new service client for '%s'", name)
        _clients[name] = ServiceClient(name, **kwargs)
        return _clients[name]
