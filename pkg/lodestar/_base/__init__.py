from .fetch import call_with_retries, make_error_handler, RETRYABLE_EXCEPTIONS  # noqa: F401
from .files import dumps_canonical, write_atomic, write_json, read_json  # noqa: F401
