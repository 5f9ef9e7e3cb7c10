"""Session handling for API-key authenticated HTTP services."""
import logging
import os

from furl import furl
import requests

from lodestar.utils.utils import LodestarError, WarningAdapter

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())
LOG = WarningAdapter(LOG)


class ServiceClient():
    """Provide session management for :class:`~requests.sessions.Session`'s against one remote service.

    Manages a single session that is re-used for all requests against the service. The API key is read from the
    environment lazily, on the first request, so that clients can be created without credentials (e.g. for runs that
    are fully replayed from a cassette).

    Single entrypoint should be the convenience :meth:`request` method.
    """

    def __init__(self, name, api_key_env=None, auth_header='Authorization', auth_scheme='Bearer', timeout=60):
        """
        Create a ServiceClient.

        :param name: name of the service, used for logging and error messages.
        :param api_key_env: environment variable holding the API key. No authentication if None.
        :param auth_header: header carrying the key.
        :param auth_scheme: prefix of the header value, e.g. 'Bearer'. Use None to send the bare key.
        :param timeout: request timeout in seconds.
        """
        self.name = name
        self.api_key_env = api_key_env
        self.auth_header = auth_header
        self.auth_scheme = auth_scheme
        self.timeout = timeout
        self._active_session = None

    def _auth_headers(self):
        if self.api_key_env is None:
            return {}
        api_key = os.getenv(self.api_key_env)
        if not api_key:
            raise MissingCredentialsError(
                f"No API key for service '{self.name}'. Set the environment variable {self.api_key_env}.")
        value = f'{self.auth_scheme} {api_key}' if self.auth_scheme else api_key
        return {self.auth_header: value}

    def request(self, method, url, **req_kwargs):
        """Make a request using this convenience wrapper.

        The interface is the same as the :meth:`requests.sessions.Session.request` method provides but changes the
        following behavior:

        - Does not return a response object. Instead, returns content or raises an error (see below).
        - Automatically merges supplied 'params' for GET requests into the URL.
        - If headers are not set, requests for JSON content by default.
        - Adds the authentication header of the service.

        Returns
        -------
        A dict if the response contains JSON. Otherwise returns the response content as bytes.

        Raises
        ------
        RequestError
            When the reponse is retrieved but response code is 400 or higher.
        """
        if method == 'GET':
            parameters = req_kwargs.pop('params', {})
            url_obj = furl(url)
            url_obj.args = {**url_obj.args, **parameters}
            url = url_obj.tostr(query_quote_plus=False)

        req_kwargs.setdefault('headers', {'Accept': 'application/json'})
        headers = dict(req_kwargs.pop('headers') or {})
        headers.update(self._auth_headers())
        req_kwargs.setdefault('timeout', self.timeout)

        session = self._get_session()

        LOG.debug('Calling %s for service %s', url, self.name)
        response = session.request(method, url, headers=headers, **req_kwargs)
        if response.ok:
            content_type = response.headers.get('content-type', '').split(';')[0].strip().lower()
            if content_type == 'application/json':
                return response.json()
            else:
                return response.content
        else:
            msg = f'Request failed. Response {response.status_code} ({response.reason}): {response.text[:500]}'
            raise RequestError(msg, response.status_code, response.reason, response.text)

    def _get_session(self):
        """Return the current active session or create a new one."""
        if self._active_session is None:
            LOG.debug('Creating new session for "%s"', self.name)
            self._active_session = requests.Session()
        return self._active_session

    def close(self):
        """Close the underlying session, if any."""
        if self._active_session is not None:
            try:
                self._active_session.close()
            except Exception:
                LOG.exception('Could not close session.')
            self._active_session = None


class RequestError(LodestarError):
    """Exception object with additional information about the status returned by a REST request."""

    def __init__(self, msg, status_code, reason, error_text):
        super().__init__(msg)
        self.status_code = status_code
        self.reason = reason
        self.error_text = error_text


class MissingCredentialsError(LodestarError):
    """Raised when a live call is attempted without the API key of the service."""
