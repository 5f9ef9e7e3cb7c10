from .service_client import ServiceClient  # noqa: F401
from .service_client import RequestError, MissingCredentialsError  # noqa: F401
from .clients import get_service_client  # noqa: F401
