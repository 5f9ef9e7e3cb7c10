import os

import pytest

from lodestar._base import make_error_handler
from lodestar.gateways import Cassette, CassetteMode, GatewayHub
from lodestar.gateways.backends import _HTTP_BACKENDS
from lodestar.knowledge import BlobStore
from lodestar.pipeline.cost import CostTracker
from lodestar.pipeline.policy import IterationPolicy
from lodestar.pipeline.stages import RunContext
from lodestar.utils.config import RunConfig
from .scenarios import GOLDEN_SCENARIOS
from .scripted_backends import FailingBackend

UNLIMITED_GATEWAYS = {binding: {'rate_limit': None} for binding in _HTTP_BACKENDS}


@pytest.fixture
def make_config():
    def maker(**kwargs):
        gateways = {binding: dict(settings) for binding, settings in UNLIMITED_GATEWAYS.items()}
        for binding, settings in (kwargs.pop('gateways', None) or {}).items():
            gateways[binding].update(settings)
        return RunConfig.from_dict({'gateways': gateways, **kwargs})
    return maker


@pytest.fixture
def make_hub():
    def maker(config, backends):
        return GatewayHub(config, backends=backends, error_handler=make_error_handler(sleep=lambda seconds: None))
    return maker


@pytest.fixture
def replay_backends():
    return {binding: FailingBackend(binding) for binding in _HTTP_BACKENDS}


@pytest.fixture
def make_session(tmp_path, make_hub):
    def maker(config, backends, cassette=None):
        hub = make_hub(config, backends)
        cassette = cassette if cassette is not None else Cassette(None, CassetteMode.Passthrough)
        return hub.session(cassette, BlobStore(os.path.join(tmp_path, 'blobs')))
    return maker


@pytest.fixture
def make_context(make_session):
    def maker(config, backends, cassette=None):
        session = make_session(config, backends, cassette)
        tracker = CostTracker()
        session.add_listener(tracker.observe)
        return RunContext(config, session, tracker, IterationPolicy.from_spec(config.policy))
    return maker


@pytest.fixture(params=sorted(GOLDEN_SCENARIOS))
def golden_scenario(request):
    return GOLDEN_SCENARIOS[request.param]()
