import json
import logging

import numpy as np
import pytest

from lodestar.gateways import Decision, InstructionRole
from lodestar.knowledge import ImageEvidence, KnowledgeBase, TextEvidence, UserPrompt
from lodestar.pipeline import (QueryPlan, RunState, RunStatus, accumulate, bootstrap, decide,
                               extend_without_evidence, plan_round, refine_and_extend, retrieve_round)
from lodestar.pipeline.stages import CAP_RATIONALE
from ..scenarios import one_round
from ..scripted_backends import ScriptedModel, ScriptedSearch, png_bytes, text_hits

PROMPT = UserPrompt('p1', 'A red panda eating bamboo', 'Animal')


def _plan_answer(text_queries=(), image_queries=(), sub_questions=('q?',)):
    return json.dumps({'sub_questions': list(sub_questions), 'text_queries': list(text_queries),
                       'image_queries': list(image_queries)})


def _looping(prompt=PROMPT, kb=None, round_=0):
    state = RunState.initial(prompt).advance(RunStatus.Looping)
    return state._replace(kb=kb if kb is not None else KnowledgeBase(), round=round_)


def _text(i, query='q'):
    return TextEvidence.create(f'Fact number {i} about red pandas.', f'https://facts.example.org/{i}', f'snippet {i}',
                               '2024-01-01T00:00:00.000Z', query)


def _image(blobs, color):
    data = png_bytes(color)
    blobs.put(data)
    return ImageEvidence.create(data, f'{color} panda', f'https://img.example.org/{color}.png', 'q', 'image/png', 8, 6)


@pytest.fixture
def config(make_config):
    return make_config()


class TestBootstrap:

    def test_merges_ranked_pages_unfiltered(self, config, make_context):
        scenario = one_round()
        backends = scenario.backends()
        ctx = make_context(config, backends)

        kb, state = bootstrap(ctx, RunState.initial(scenario.prompt))

        assert state.status is RunStatus.Looping
        assert state.bootstrap_ran
        assert state.kb is kb
        assert [text.source_url for text in kb.texts] == ['https://boot.example.org/page1',
                                                          'https://boot.example.org/page2']
        assert set(kb.round_added.values()) == {0}
        assert backends['model'].roles() == [InstructionRole.Bootstrap]
        assert backends['search'].queries == [scenario.prompt.text]

    def test_search_failure_leaves_kb_empty(self, config, make_context, caplog):
        model = ScriptedModel()
        ctx = make_context(config, {'model': model, 'search': ScriptedSearch(failing=[PROMPT.text])})

        kb, state = bootstrap(ctx, RunState.initial(PROMPT))

        assert len(kb) == 0
        assert state.status is RunStatus.Looping
        assert model.calls == []
        assert 'continuing without evidence' in caplog.text

    def test_needs_bootstrapping_state(self, config, make_context):
        with pytest.raises(ValueError):
            bootstrap(make_context(config, {}), _looping())


class TestPlanRound:

    def test_query_cap_fuzzed(self, config, make_context):
        rng = np.random.default_rng(11)
        for _ in range(40):
            n = int(rng.integers(0, 11))
            n_text = int(rng.integers(0, n + 1))
            text_queries = [f'text {i}' for i in range(n_text)]
            image_queries = [f'image {i}' for i in range(n - n_text)]
            model = ScriptedModel({InstructionRole.QueryPlanning: [_plan_answer(text_queries, image_queries)]})

            plan, state = plan_round(make_context(config, {'model': model}), _looping())

            assert len(plan) == min(n, 5)
            assert plan.queries == (text_queries + image_queries)[:5]
            assert plan.round == state.round == 1

    def test_cap_is_logged(self, config, make_context, caplog):
        model = ScriptedModel({InstructionRole.QueryPlanning: [_plan_answer([f't{i}' for i in range(7)])]})
        with caplog.at_level(logging.WARNING):
            plan_round(make_context(config, {'model': model}), _looping())
        assert 'dispatching only the first 5' in caplog.text

    @pytest.mark.parametrize('testdescr,modalities,expected_text,expected_image', [
        ('both', 'both', ('t',), ('i',)),
        ('text only', 'text', ('t',), ()),
        ('image only', 'image', (), ('i',)),
    ])
    def test_modalities(self, make_config, make_context, modalities, expected_text, expected_image, testdescr):
        model = ScriptedModel({InstructionRole.QueryPlanning: [_plan_answer(['t'], ['i'])]})
        plan, _ = plan_round(make_context(make_config(modalities=modalities), {'model': model}), _looping())
        assert (plan.text_queries, plan.image_queries) == (expected_text, expected_image)
        if modalities == 'text':
            assert 'Only text queries' in model.calls[0][1]

    def test_zero_queries_still_advance_round(self, config, make_context):
        model = ScriptedModel({InstructionRole.QueryPlanning: [_plan_answer(sub_questions=['new?', 'q?'])]})
        state = _looping(round_=1)._replace(pending_questions=('q?',))

        plan, state = plan_round(make_context(config, {'model': model}), state)

        assert len(plan) == 0
        assert state.round == 2
        assert state.pending_questions == ('q?', 'new?')


class TestRetrieveRound:

    def test_results_in_query_order(self, config, make_context):
        scenario = one_round()
        ctx = make_context(config, scenario.backends())
        plan = QueryPlan((), ('N700S livery', scenario.prompt.text), ('N700S photo',), 1)

        texts, images = retrieve_round(ctx, plan, scenario.prompt)

        assert [text.source_url for text in texts] == ['https://livery.example.org/page1',
                                                       'https://livery.example.org/page2',
                                                       'https://boot.example.org/page1',
                                                       'https://boot.example.org/page2']
        assert [text.query_of_origin for text in texts] == ['N700S livery'] * 2 + [scenario.prompt.text] * 2
        assert [image.source_url for image in images] == ['https://img.example.org/photo/1.png',
                                                          'https://img.example.org/photo/2.png']

    def test_failed_search_skips_query(self, config, make_context, caplog):
        search = ScriptedSearch({'good': text_hits('good', 1)}, failing=['bad'])
        backends = {'model': ScriptedModel(), 'search': search,
                    'reader': one_round().backends()['reader']}
        backends['reader'].pages['https://good.example.org/page1'] = 'Good facts.'
        ctx = make_context(config, backends)

        texts, images = retrieve_round(ctx, QueryPlan((), ('bad', 'good'), (), 1), PROMPT)

        assert [text.content for text in texts] == ['Good facts.']
        assert images == []
        assert 'Skipping text query "bad"' in caplog.text

    def test_empty_plan(self, config, make_context):
        with pytest.raises(ValueError):
            retrieve_round(make_context(config, {}), QueryPlan((), (), (), 1), PROMPT)


class TestAccumulate:

    def test_filters_texts_then_images(self, config, make_context):
        model = ScriptedModel({InstructionRole.TextFilter: [json.dumps({'keep': [2]})],
                               InstructionRole.ImageFilter: [json.dumps({'keep': [1]})]})
        ctx = make_context(config, {'model': model})
        images = [_image(ctx.session.blobs, 'red'), _image(ctx.session.blobs, 'blue')]

        state = accumulate(ctx, _looping(round_=1), [_text(1), _text(2)], images)

        assert state.kb.texts == (_text(2),)
        assert state.kb.images == (images[0],)
        assert set(state.kb.round_added.values()) == {1}
        role, image_prompt, n_images = model.calls[1]
        assert role is InstructionRole.ImageFilter
        assert n_images == 2
        assert _text(2).content in image_prompt
        assert _text(1).content not in image_prompt

    def test_known_and_duplicate_evidence_is_not_offered(self, config, make_context):
        model = ScriptedModel()
        ctx = make_context(config, {'model': model})
        kb = KnowledgeBase().merge([_text(1)], [], 0)

        state = accumulate(ctx, _looping(kb=kb, round_=1), [_text(1), _text(2), _text(2)], [])

        [(role, prompt, _)] = model.calls
        assert role is InstructionRole.TextFilter
        assert 'numbers of the 1 texts' in prompt
        assert state.kb.texts == (_text(1), _text(2))
        assert state.kb.round_added[_text(2).content_hash] == 1

    def test_ablation_merges_without_model(self, make_config, make_context):
        model = ScriptedModel()
        ctx = make_context(make_config(ablations=['accumulation']), {'model': model})
        images = [_image(ctx.session.blobs, 'red')]
        state = accumulate(ctx, _looping(round_=1), [_text(1), _text(2)], images)
        assert len(state.kb) == 3
        assert model.calls == []


class TestDecide:

    def test_adaptive_asks_model(self, config, make_context):
        model = ScriptedModel({InstructionRole.Sufficiency: [json.dumps({'decision': 'Retrieval',
                                                                         'rationale': 'habitat unknown'})]})
        decision = decide(make_context(config, {'model': model}), _looping(round_=1))
        assert decision.value is Decision.Retrieval
        assert decision.rationale == 'habitat unknown'
        assert (decision.round, decision.retrieved, decision.source) == (1, True, 'model')

    def test_cap_overrides_model(self, make_config, make_context, caplog):
        model = ScriptedModel({InstructionRole.Sufficiency: [json.dumps({'decision': 'Retrieval'})]})
        ctx = make_context(make_config(max_rounds=2), {'model': model})

        decision = decide(ctx, _looping(round_=2))

        assert decision.value is Decision.Refine
        assert decision.rationale == CAP_RATIONALE
        assert decision.source == 'cap'
        assert model.calls == []
        assert 'Round cap of 2 reached' in caplog.text

    @pytest.mark.parametrize('testdescr,completed,expected', [
        ('first round', 1, Decision.Retrieval),
        ('last scheduled round', 2, Decision.Retrieval),
        ('schedule done', 3, Decision.Refine),
    ])
    def test_fixed_policy(self, make_config, make_context, completed, expected, testdescr):
        model = ScriptedModel()
        ctx = make_context(make_config(policy='fixed:3', max_rounds=3), {'model': model})
        decision = decide(ctx, _looping(round_=completed))
        assert decision.value is expected
        assert decision.source == 'policy'
        assert model.calls == []

    def test_unparseable_answer_falls_back_to_refine(self, config, make_context):
        model = ScriptedModel({InstructionRole.Sufficiency: ['maybe?', '{"decision": "Perhaps"}']})
        decision = decide(make_context(config, {'model': model}), _looping(round_=1), retrieved=False)
        assert decision.value is Decision.Refine
        assert (decision.source, decision.retrieved) == ('fallback', False)
        assert len(model.calls) == 2


def _refining(ctx, colors=('red', 'blue')):
    kb = KnowledgeBase().merge([_text(1)], [_image(ctx.session.blobs, color) for color in colors], 1)
    return RunState.initial(PROMPT).advance(RunStatus.Refining)._replace(kb=kb)


class TestRefineAndExtend:

    def test_full_refinement(self, config, make_context):
        model = ScriptedModel({
            InstructionRole.ContentRefine: [json.dumps({'textual_features': ['eats bamboo'],
                                                        'image_indices': [2, 1]})],
            InstructionRole.PromptExtend: [json.dumps({'prompt': 'A red panda eating bamboo, reddish fur.'})],
        })
        ctx = make_context(config, {'model': model})
        state = _refining(ctx)

        enriched = refine_and_extend(ctx, state)

        assert enriched.prompt_text == 'A red panda eating bamboo, reddish fur.'
        assert enriched.textual_features == ('eats bamboo',)
        assert enriched.visual_features == ('blue body', 'white stripes')
        assert enriched.refined_images == (state.kb.images[1], state.kb.images[0])
        assert enriched.source_prompt_id == 'p1'
        assert [(role, n) for role, _, n in model.calls] == [(InstructionRole.ContentRefine, 2),
                                                            (InstructionRole.VisualRefine, 2),
                                                            (InstructionRole.PromptExtend, 2)]
        assert ctx.tracker.stage == 'PromptExtension'

    def test_no_images_skips_visual_refinement(self, config, make_context):
        model = ScriptedModel()
        ctx = make_context(config, {'model': model})
        enriched = refine_and_extend(ctx, _refining(ctx, colors=()))
        assert enriched.visual_features == ()
        assert enriched.refined_images == ()
        assert model.roles() == [InstructionRole.ContentRefine, InstructionRole.PromptExtend]

    def test_refinement_ablation(self, make_config, make_context):
        model = ScriptedModel()
        ctx = make_context(make_config(ablations=['refinement'], keep_images=1), {'model': model})
        state = _refining(ctx)
        enriched = refine_and_extend(ctx, state)
        assert enriched.textual_features == ('snippet 1',)
        assert enriched.refined_images == (state.kb.images[0],)
        assert model.roles() == [InstructionRole.PromptExtend]

    def test_extension_ablation(self, make_config, make_context):
        model = ScriptedModel()
        ctx = make_context(make_config(ablations=['extension']), {'model': model})
        enriched = refine_and_extend(ctx, _refining(ctx))
        assert enriched.prompt_text == ('A red panda eating bamboo\nFacts: a documented fact\n'
                                        'Visual details: blue body; white stripes')
        assert InstructionRole.PromptExtend not in model.roles()

    def test_extend_without_evidence(self, config, make_context):
        model = ScriptedModel()
        ctx = make_context(config, {'model': model})
        enriched = extend_without_evidence(ctx, RunState.initial(PROMPT).advance(RunStatus.Refining))
        assert enriched.prompt_text == 'An extended and detailed prompt.'
        assert 'Textual facts:\n(none)' in model.calls[0][1]
        assert model.roles() == [InstructionRole.PromptExtend]
