"""
Gateways package provides replayable clients for the reasoning model, web search, page reader, image download and
image generation.

Use :class:`GatewayHub` to share backends and rate limits and :meth:`GatewayHub.session` to obtain the gateways of
one run.
"""

from .cassette import Cassette, CassetteEntry, CassetteMode, DeterminismError, fingerprint  # noqa: F401
from .dispatch import GatewayError  # noqa: F401
from .generation import GenerationArtifact, GenerationError, StubImageGenerator, prompt_hash  # noqa: F401
from .hub import GatewayHub, GatewaySession  # noqa: F401
from .instructions import InstructionRole, TemplateError  # noqa: F401
from .model import ModelExchange, ModelReply, TOKEN_ESTIMATOR  # noqa: F401
from .rate_limit import RateLimiter  # noqa: F401
from .structured import (Decision, ModelOutputError, StructuredOutputError, SchemaValidationError,  # noqa: F401
                         parse_structured)
from .web import SearchHit  # noqa: F401
