import pytest

from lodestar.gateways import (Cassette, CassetteMode, InstructionRole, ModelReply, StructuredOutputError,
                               TOKEN_ESTIMATOR)
from lodestar.gateways.model import CORRECTION_NOTE
from ..scripted_backends import ScriptedModel, png_bytes

FILTER_CONTEXT = {'prompt': 'a red panda', 'candidates': '[1] one\n[2] two', 'count': 2}


@pytest.fixture
def config(make_config):
    return make_config()


def test_invoke_estimates_tokens(config, make_session):
    cassette = Cassette(None, CassetteMode.Record)
    session = make_session(config, {'model': ScriptedModel({InstructionRole.TextFilter: ['{"keep": [1]}']})},
                           cassette)

    exchange = session.model_invoke(InstructionRole.TextFilter, FILTER_CONTEXT)

    assert exchange.raw_response == '{"keep": [1]}'
    assert exchange.output_tokens == 2
    assert exchange.input_tokens == len(exchange.rendered_prompt.split())
    assert exchange.attempts == 1
    [entry] = cassette.entries
    assert entry.role == 'TextFilter'
    assert entry.meta['token_source'] == TOKEN_ESTIMATOR


def test_invoke_uses_backend_token_counts(config, make_session):
    model = ScriptedModel({InstructionRole.TextFilter: [lambda prompt: ModelReply('{"keep": []}', 120, 7)]})
    cassette = Cassette(None, CassetteMode.Record)
    exchange = make_session(config, {'model': model}, cassette).model_invoke(InstructionRole.TextFilter,
                                                                             FILTER_CONTEXT)
    assert (exchange.input_tokens, exchange.output_tokens) == (120, 7)
    assert cassette.entries[0].meta['token_source'] == 'backend'


def test_invoke_attaches_images(config, make_session):
    model = ScriptedModel()
    session = make_session(config, {'model': model})
    keys = [session.blobs.put(png_bytes('red')), session.blobs.put(png_bytes('blue'))]
    context = {'prompt': 'p', 'knowledge': 'k', 'candidates': '[1] a\n[2] b', 'count': 2}

    exchange = session.model_invoke(InstructionRole.ImageFilter, context, images=keys)

    assert model.calls[0][2] == 2
    assert exchange.attached_image_keys == tuple(keys)


def test_structured_reasks_once(config, make_session, caplog):
    model = ScriptedModel({InstructionRole.TextFilter: ['I keep the first one.', '{"keep": [1]}']})
    session = make_session(config, {'model': model})

    value, exchanges = session.model.invoke_structured(InstructionRole.TextFilter, FILTER_CONTEXT,
                                                       validation_context={'count': 2})

    assert value.keep == [1]
    assert len(exchanges) == 2
    assert exchanges[1].rendered_prompt.startswith(exchanges[0].rendered_prompt)
    assert 'could not be used' in exchanges[1].rendered_prompt
    assert CORRECTION_NOTE.split('(')[0] in model.calls[1][1]
    assert 'asking again' in caplog.text


def test_structured_fails_after_second_attempt(config, make_session):
    model = ScriptedModel({InstructionRole.TextFilter: ['nope', 'still nope']})
    with pytest.raises(StructuredOutputError):
        make_session(config, {'model': model}).model.invoke_structured(InstructionRole.TextFilter, FILTER_CONTEXT)
    assert len(model.calls) == 2
