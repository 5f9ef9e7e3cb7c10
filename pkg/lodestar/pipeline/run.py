"""
Run the full pipeline for one prompt, or many, and persist the run directory.

A run directory holds::

    kb/                   knowledge base manifest and image blobs
    cassette.jsonl        every external exchange of the run
    enriched_prompt.json  the enriched prompt, its features and reference image hashes
    cost_report.json      per-stage and per-round costs
    artifact/             generated image and its manifest
    run.json              prompt, config, status and error of the run
    run_state.json        checkpoint written at every stage boundary
"""
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import shutil
import uuid

from lodestar._base import read_json, write_json
from lodestar.gateways.cassette import Cassette, CassetteMode
from lodestar.gateways.structured import Decision
from lodestar.gateways.generation import GenerationArtifact
from lodestar.gateways.hub import GatewayHub
from lodestar.gateways.model import TOKEN_ESTIMATOR
from lodestar.knowledge.evidence import UserPrompt
from lodestar.knowledge.knowledge_base import KnowledgeBase
from lodestar.knowledge.persistence import BlobStore, kb_load, kb_save
from lodestar.utils.config import ConfigError
from lodestar.utils.utils import LodestarError
from .cost import CostReport, CostTracker, report_cost
from .policy import IterationPolicy
from .stages import (RunContext, accumulate, bootstrap, decide, extend_without_evidence, plan_round,
                     refine_and_extend, retrieve_round)
from .state import EnrichedPrompt, RunState, RunStatus

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

KB_DIR = 'kb'
CASSETTE_NAME = 'cassette.jsonl'
ENRICHED_NAME = 'enriched_prompt.json'
COST_NAME = 'cost_report.json'
ARTIFACT_DIR = 'artifact'
RUN_NAME = 'run.json'
STATE_NAME = 'run_state.json'

RunBundle = namedtuple('RunBundle', ['prompt', 'status', 'enriched', 'artifact', 'kb', 'cost', 'decisions', 'run_dir',
                                     'error'])
RunBundle.__doc__ = 'Outputs of a run. ``error`` holds the exception of a failed run.'


def _open_cassette(config, run_dir, resume_entries=None):
    mode = CassetteMode(config.cassette_mode)
    if mode is CassetteMode.Replay:
        if not os.path.exists(config.cassette_path):
            raise ConfigError(f'Cassette not found: {config.cassette_path}')
        return Cassette(config.cassette_path, mode)
    if mode is CassetteMode.Passthrough:
        return Cassette(None, mode)

    path = config.cassette_path or os.path.join(run_dir, CASSETTE_NAME)
    if resume_entries is None:
        if os.path.exists(path):
            os.remove(path)
        return Cassette(path, mode)
    cassette = Cassette(path, mode, entries=Cassette.read_entries(path) if os.path.exists(path) else [])
    cassette.truncate(resume_entries)
    return cassette


class _Progress():
    """Last checkpointed state of a run and the cassette length at that checkpoint."""

    def __init__(self, state, cassette_entries):
        self.state = state
        self.cassette_entries = cassette_entries


def _checkpoint(ctx, state, run_dir, cassette, progress=None):
    state = state._replace(cost=ctx.tracker.report(state.loop_iterations))
    kb_save(state.kb, os.path.join(run_dir, KB_DIR), ctx.session.blobs)
    checkpoint = {'state': state.to_dict(), 'cassette_entries': len(cassette)}
    if progress is not None:
        # a failed run resumes from the last stage it completed
        checkpoint.update(cassette_entries=progress.cassette_entries, resume_state=progress.state.to_dict())
    write_json(os.path.join(run_dir, STATE_NAME), checkpoint)
    LOG.debug('Checkpoint of prompt %s at status %s.', state.prompt.id, state.status.value)
    return state


def _load_checkpoint(run_dir, resumable=False):
    path = os.path.join(run_dir, STATE_NAME)
    if not os.path.exists(path):
        return None, None
    checkpoint = read_json(path)
    kb_dir = os.path.join(run_dir, KB_DIR)
    kb = kb_load(kb_dir) if os.path.exists(os.path.join(kb_dir, 'manifest.json')) else KnowledgeBase()
    if resumable and checkpoint.get('resume_state'):
        return RunState.from_dict(checkpoint['resume_state'], kb), checkpoint['cassette_entries']
    return RunState.from_dict(checkpoint['state'], kb), checkpoint['cassette_entries']


def load_artifact(run_dir):
    """Return the generation artifact of a run directory, or None."""
    manifest_path = os.path.join(run_dir, ARTIFACT_DIR, 'manifest.json')
    if not os.path.exists(manifest_path):
        return None
    manifest = read_json(manifest_path)
    return GenerationArtifact(os.path.join(run_dir, ARTIFACT_DIR, manifest['file']), manifest_path,
                              manifest['prompt_hash'], manifest['reference_hashes'], manifest['bytes'],
                              manifest['mime'])


def _drive(ctx, progress, run_dir, cassette):
    config = ctx.config
    state, artifact = progress.state, None

    def checkpoint(new_state):
        progress.state = _checkpoint(ctx, new_state, run_dir, cassette)
        progress.cassette_entries = len(cassette)
        return progress.state

    if state.status is RunStatus.Bootstrapping:
        if config.condition in ('direct', 'prompt_enhanced'):
            state = checkpoint(state.advance(RunStatus.Refining))
        elif 'bootstrap' in config.ablations:
            state = checkpoint(state.advance(RunStatus.Looping))
        else:
            _, state = bootstrap(ctx, state)
            state = checkpoint(state)

    while state.status is RunStatus.Looping:
        ctx.tracker.stage = 'QueryPlanning'
        plan, state = plan_round(ctx, state)
        ctx.tracker.round = plan.round
        retrieved = len(plan) > 0
        if retrieved:
            raw_texts, raw_images = retrieve_round(ctx, plan, state.prompt)
            ctx.tracker.stage = 'KnowledgeAccumulation'
            state = accumulate(ctx, state, raw_texts, raw_images)
        ctx.tracker.stage = 'KnowledgeAccumulation'
        decision = decide(ctx, state, retrieved)
        state = state._replace(decisions=state.decisions + (decision,))
        LOG.info('Round %d of prompt %s: %s (%s).', decision.round, state.prompt.id, decision.value.value,
                 decision.source)
        if decision.value is Decision.Refine:
            state = state.advance(RunStatus.Refining)
        state = checkpoint(state)

    if state.status is RunStatus.Refining:
        if config.condition == 'direct':
            enriched = EnrichedPrompt(state.prompt.text, [], [], [], state.prompt.id)
        elif config.condition == 'prompt_enhanced':
            enriched = extend_without_evidence(ctx, state)
        else:
            enriched = refine_and_extend(ctx, state)
        next_status = RunStatus.Done if config.skip_generation else RunStatus.Generating
        state = checkpoint(state.advance(next_status, enriched=enriched))

    if state.status is RunStatus.Generating:
        artifact = ctx.session.generate_image(state.enriched, os.path.join(run_dir, ARTIFACT_DIR))
        state = checkpoint(state.advance(RunStatus.Done))
    elif state.status is RunStatus.Done and not config.skip_generation:
        artifact = load_artifact(run_dir)

    return state, artifact


def _write_outputs(bundle, config, cassette, run_id):
    run_dir = bundle.run_dir
    if bundle.enriched is not None:
        write_json(os.path.join(run_dir, ENRICHED_NAME), bundle.enriched.to_dict())
    write_json(os.path.join(run_dir, COST_NAME), report_cost(bundle).data)

    target = os.path.join(run_dir, CASSETTE_NAME)
    if cassette.path is not None and os.path.abspath(cassette.path) != os.path.abspath(target) \
            and os.path.exists(cassette.path):
        shutil.copyfile(cassette.path, target)

    write_json(os.path.join(run_dir, RUN_NAME), {
        'run_id': run_id,
        'prompt': bundle.prompt.to_dict(),
        'config': config.to_dict(),
        'token_estimator': TOKEN_ESTIMATOR,
        'status': bundle.status.value,
        'error': str(bundle.error) if bundle.error is not None else None,
        'error_type': type(bundle.error).__name__ if bundle.error is not None else None,
        'loop_iterations': bundle.cost.loop_iterations,
        'decisions': [decision.to_dict() for decision in bundle.decisions],
    })


def run(prompt, config, out_dir, hub=None, resume=False):
    """Run the pipeline for ``prompt`` and persist the run directory ``out_dir``.

    Parameters
    ----------
    prompt
        :class:`~lodestar.knowledge.evidence.UserPrompt` to enrich.
    config
        Validated :class:`~lodestar.utils.config.RunConfig`.
    out_dir
        Run directory. Created if missing.
    hub
        :class:`~lodestar.gateways.hub.GatewayHub` to take the gateways from. A new hub is created if None.
    resume
        Continue from the checkpoint in ``out_dir`` if one exists. Only record and passthrough runs can resume.

    Returns
    -------
    RunBundle
        Failed runs return a bundle with status Failed and all partial outputs written.
    """
    os.makedirs(out_dir, exist_ok=True)
    state, resume_entries = (None, None)
    if resume and config.cassette_mode != 'replay':
        state, resume_entries = _load_checkpoint(out_dir, resumable=True)
        if state is not None:
            LOG.info('Resuming prompt %s from status %s.', state.prompt.id, state.status.value)
    if state is None or state.status is RunStatus.Failed:
        state, resume_entries = RunState.initial(prompt), None

    run_id = uuid.uuid5(uuid.NAMESPACE_URL, f'lodestar:{prompt.id}:{prompt.text}').hex
    cassette = _open_cassette(config, out_dir, resume_entries)
    cassette.run_id = run_id
    hub = hub or GatewayHub(config)
    blobs = BlobStore(os.path.join(out_dir, KB_DIR, 'blobs'))
    session = hub.session(cassette, blobs)
    tracker = CostTracker(state.cost)
    session.add_listener(tracker.observe)
    ctx = RunContext(config, session, tracker, IterationPolicy.from_spec(config.policy))

    artifact, error = None, None
    progress = _Progress(state, len(cassette))
    try:
        state, artifact = _drive(ctx, progress, out_dir, cassette)
    except LodestarError as exc:
        reached = progress.state
        LOG.error('Run of prompt %s failed after status %s: %s', reached.prompt.id, reached.status.value, exc)
        error = exc
        state = reached._replace(cost=tracker.report(reached.loop_iterations))
        state = state.advance(RunStatus.Failed, error=f'{type(exc).__name__}: {exc}')
        _checkpoint(ctx, state, out_dir, cassette, progress)

    if cassette.mode is CassetteMode.Replay and error is None and cassette.unconsumed():
        LOG.warning('Replay of prompt %s left %d cassette entries unused.', prompt.id, len(cassette.unconsumed()))

    bundle = RunBundle(state.prompt, state.status, state.enriched, artifact, state.kb, state.cost, state.decisions,
                       out_dir, error)
    _write_outputs(bundle, config, cassette, run_id)
    LOG.info('Run of prompt %s finished with status %s after %d iteration(s).', prompt.id, state.status.value,
             state.loop_iterations)
    return bundle


def load_bundle(run_dir):
    """Read the outputs of a finished run directory into a :class:`RunBundle`."""
    run_info = read_json(os.path.join(run_dir, RUN_NAME))
    state, _ = _load_checkpoint(run_dir)
    if state is None:
        raise LodestarError(f'No run state found in {run_dir}.')
    cost = CostReport.from_dict(read_json(os.path.join(run_dir, COST_NAME)))
    error = LodestarError(run_info['error']) if run_info.get('error') else None
    return RunBundle(UserPrompt.from_dict(run_info['prompt']), RunStatus(run_info['status']), state.enriched,
                     load_artifact(run_dir), state.kb, cost, state.decisions, run_dir, error)


def _config_for_prompt(config, prompt):
    if config.cassette_mode == 'replay' and config.cassette_path and os.path.isdir(config.cassette_path):
        return config._replace(cassette_path=os.path.join(config.cassette_path, prompt.id, CASSETTE_NAME))
    if config.cassette_mode == 'record' and config.cassette_path:
        return config._replace(cassette_path=os.path.join(config.cassette_path, prompt.id, CASSETTE_NAME))
    return config


def run_batch(prompts, config, out_dir, hub=None, resume=False):
    """Run every prompt into ``out_dir/<prompt id>`` with ``config.batch_workers`` concurrent pipelines.

    All pipelines share one :class:`GatewayHub`, hence one set of rate limits. Returns bundles in prompt order.
    For replay, ``cassette_path`` may be a directory holding ``<prompt id>/cassette.jsonl``.
    """
    hub = hub or GatewayHub(config)
    with ThreadPoolExecutor(max_workers=config.batch_workers) as executor:
        futures = [executor.submit(run, prompt, _config_for_prompt(config, prompt),
                                   os.path.join(out_dir, prompt.id), hub, resume)
                   for prompt in prompts]
        return [future.result() for future in futures]
