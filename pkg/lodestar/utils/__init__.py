from .config import RunConfig, ConfigError  # noqa: F401
from .utils import LodestarError, NoEvidenceWarning, WarningAdapter  # noqa: F401
