"""
Command-line entry points: run pipelines, verify replays, evaluate datasets and render reports.

Exit codes are 0 on success, 1 on usage errors, 2 on failed runs or diverging replays and 3 when an evaluation
covers fewer prompts than ``min_coverage`` requires.
"""
import argparse
import filecmp
import logging
import os
import sys
import tempfile

from lodestar._base import read_json
from lodestar.fig_eval import DatasetError, evaluate_run, load_dataset
from lodestar.fig_eval.report import REPORT_NAME, TABLE_NAME
from lodestar.gateways import Cassette, CassetteMode, GatewayHub
from lodestar.knowledge import BlobStore, UserPrompt, content_hash_text
from lodestar.pipeline import RunStatus, load_bundle, report_cost, run, run_batch
from lodestar.pipeline.run import CASSETTE_NAME, COST_NAME, ENRICHED_NAME, RUN_NAME
from lodestar.utils.config import ConfigError, RunConfig
from lodestar.utils.utils import LodestarError

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2
EXIT_COVERAGE = 3

# outputs compared byte by byte by replay-verify
VERIFIED_FILES = (ENRICHED_NAME, os.path.join('kb', 'manifest.json'), COST_NAME)
JUDGE_CASSETTE_NAME = 'judge_cassette.jsonl'


class UsageError(LodestarError):
    """Raised for invalid command-line usage."""


class _ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def parse_cassette_spec(spec):
    """Split ``record:<path>``, ``replay:<path>``, ``record`` or ``off`` into ``(mode, path)``."""
    mode, _, path = spec.partition(':')
    if mode not in ('record', 'replay', 'off'):
        raise UsageError(f"Invalid cassette '{spec}'. Use record:<path>, replay:<path> or off.")
    if mode == 'replay' and not path:
        raise UsageError('A replay cassette needs a path: replay:<path>.')
    if mode == 'off' and path:
        raise UsageError("The 'off' cassette takes no path.")
    return mode, path or None


def build_parser():
    parser = _ArgumentParser(prog='lodestar', description='Knowledge-enriched image generation runs and evaluation.')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML run configuration. Defaults to the usual config lookup.')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override a config key after loading, e.g. gateways.model.rate_limit=2. Repeatable.')
    common.add_argument('--verbose', action='store_true', help='Log at DEBUG level.')

    run_flags = argparse.ArgumentParser(add_help=False)
    run_flags.add_argument('--cassette', metavar='MODE[:PATH]',
                           help='record:<path>, replay:<path> or off. Overrides cassette_mode and cassette_path.')
    run_flags.add_argument('--policy', help="Iteration policy: 'adaptive' or 'fixed:<n>'.")
    run_flags.add_argument('--skip-generation', action='store_true', help='Stop after the enriched prompt.')
    run_flags.add_argument('--resume', action='store_true',
                           help='Continue interrupted runs from their checkpoint instead of starting over.')

    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=_ArgumentParser)
    subparsers.required = True

    cmd = subparsers.add_parser('run', parents=[common, run_flags], help='Run the pipeline for one prompt.')
    cmd.add_argument('--prompt', required=True,
                     help='Prompt text, or a prompt id when --dataset is given.')
    cmd.add_argument('--dataset', help='Dataset to look the prompt id up in.')
    cmd.add_argument('--out', required=True, help='Run directory.')

    cmd = subparsers.add_parser('batch', parents=[common, run_flags], help='Run every prompt of a dataset.')
    cmd.add_argument('--dataset', required=True, help='Dataset with the prompts to run.')
    cmd.add_argument('--out', required=True, help='Directory receiving one run directory per prompt.')

    cmd = subparsers.add_parser('eval', parents=[common], help='Judge the runs of a dataset and write the report.')
    cmd.add_argument('--dataset', required=True, help='Dataset with questions and features.')
    cmd.add_argument('--out', required=True, help='Runs directory written by batch; receives the report.')
    cmd.add_argument('--judge-cassette', metavar='MODE[:PATH]',
                     help='Cassette of the judge model. Defaults to recording into <out>/judge_cassette.jsonl.')

    cmd = subparsers.add_parser('replay-verify', parents=[common],
                                help='Replay a run from its cassette and compare the outputs byte by byte.')
    cmd.add_argument('--out', required=True, help='Run directory to verify.')

    cmd = subparsers.add_parser('report', parents=[common],
                                help='Print the cost report of a run or the evaluation report of a runs directory.')
    cmd.add_argument('--out', required=True, help='Run directory or evaluated runs directory.')
    return parser


def _configure_logging(verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _load_config(args):
    if args.config is not None and not os.path.exists(args.config):
        raise UsageError(f'Config file not found: {args.config}')
    config = RunConfig.load(args.config).with_overrides(args.overrides)
    changes = {}
    if getattr(args, 'cassette', None):
        changes['cassette_mode'], changes['cassette_path'] = parse_cassette_spec(args.cassette)
    if getattr(args, 'policy', None):
        changes['policy'] = args.policy
    if getattr(args, 'skip_generation', False):
        changes['skip_generation'] = True
    config = config._replace(**changes)
    config.validate()
    return config


def _prompt_from_args(args):
    if args.dataset:
        dataset = load_dataset(args.dataset)
        try:
            return dataset.prompt(args.prompt)
        except KeyError:
            raise UsageError(f"Prompt '{args.prompt}' not found in {args.dataset}.") from None
    if not args.prompt.strip():
        raise UsageError('The prompt is blank.')
    return UserPrompt(f'prompt-{content_hash_text(args.prompt)[:12]}', args.prompt)


def cmd_run(args):
    config = _load_config(args)
    prompt = _prompt_from_args(args)
    bundle = run(prompt, config, args.out, resume=args.resume)
    if bundle.status is not RunStatus.Done:
        print(f'Run of {prompt.id} failed: {bundle.error}', file=sys.stderr)
        return EXIT_FAILED
    print(f'Run of {prompt.id} done: {args.out}')
    return EXIT_OK


def cmd_batch(args):
    config = _load_config(args)
    dataset = load_dataset(args.dataset)
    if len(dataset) == 0:
        raise UsageError(f'Dataset {args.dataset} has no prompts.')
    bundles = run_batch(dataset.prompts, config, args.out, resume=args.resume)
    failed = [bundle for bundle in bundles if bundle.status is not RunStatus.Done]
    for bundle in failed:
        print(f'Run of {bundle.prompt.id} failed: {bundle.error}', file=sys.stderr)
    print(f'{len(bundles) - len(failed)}/{len(bundles)} runs done: {args.out}')
    return EXIT_FAILED if failed else EXIT_OK


def _judge_cassette(spec, out_dir):
    mode, path = parse_cassette_spec(spec) if spec else ('record', None)
    if mode == 'off':
        return Cassette(None, CassetteMode.Passthrough)
    if mode == 'replay':
        if not os.path.exists(path):
            raise UsageError(f'Judge cassette not found: {path}')
        return Cassette(path, CassetteMode.Replay)
    path = path or os.path.join(out_dir, JUDGE_CASSETTE_NAME)
    if os.path.exists(path):
        os.remove(path)
    return Cassette(path, CassetteMode.Record)


def cmd_eval(args):
    config = _load_config(args)
    dataset = load_dataset(args.dataset)
    if len(dataset) == 0:
        raise UsageError(f'Dataset {args.dataset} has no prompts.')
    bundles = {}
    for prompt in dataset.prompts:
        run_dir = os.path.join(args.out, prompt.id)
        if os.path.exists(os.path.join(run_dir, RUN_NAME)):
            bundles[prompt.id] = load_bundle(run_dir)
    os.makedirs(args.out, exist_ok=True)
    cassette = _judge_cassette(args.judge_cassette, args.out)
    judge = GatewayHub(config).session(cassette, BlobStore(os.path.join(args.out, 'judge_blobs')),
                                       model_binding='judge')
    report = evaluate_run(dataset, bundles, judge, out_dir=args.out, micro=False, concurrency=config.concurrency)
    print(report.text, end='')
    if report.coverage < config.min_coverage:
        print(f'Coverage {float(report.coverage):.3f} is below min_coverage {config.min_coverage}.',
              file=sys.stderr)
        return EXIT_COVERAGE
    return EXIT_OK


def _first_difference(original_dir, replay_dir):
    for name in VERIFIED_FILES:
        original, replayed = os.path.join(original_dir, name), os.path.join(replay_dir, name)
        if os.path.exists(original) != os.path.exists(replayed):
            return name
        if os.path.exists(original) and not filecmp.cmp(original, replayed, shallow=False):
            return name
    return None


def cmd_replay_verify(args):
    run_info_path = os.path.join(args.out, RUN_NAME)
    cassette_path = os.path.join(args.out, CASSETTE_NAME)
    for path in (run_info_path, cassette_path):
        if not os.path.exists(path):
            raise UsageError(f'Not a run directory, {path} is missing.')
    run_info = read_json(run_info_path)
    config = RunConfig.from_dict(run_info['config'])
    config = config._replace(cassette_mode='replay', cassette_path=cassette_path).with_overrides(args.overrides)
    prompt = UserPrompt.from_dict(run_info['prompt'])

    with tempfile.TemporaryDirectory(prefix='lodestar-verify-') as replay_dir:
        bundle = run(prompt, config, replay_dir)
        if bundle.status is RunStatus.Failed:
            print(f'Replay of {prompt.id} failed: {bundle.error}', file=sys.stderr)
            return EXIT_FAILED
        difference = _first_difference(args.out, replay_dir)
    if difference is not None:
        print(f'Replay of {prompt.id} diverges in {difference}.', file=sys.stderr)
        return EXIT_FAILED
    print(f'Replay of {prompt.id} is identical.')
    return EXIT_OK


def cmd_report(args):
    table_path = os.path.join(args.out, TABLE_NAME)
    if os.path.exists(os.path.join(args.out, REPORT_NAME)) and os.path.exists(table_path):
        with open(table_path, 'r', encoding='utf-8') as f:
            print(f.read(), end='')
        return EXIT_OK
    if not os.path.exists(os.path.join(args.out, RUN_NAME)):
        raise UsageError(f'{args.out} holds neither an evaluation report nor a run.')
    bundle = load_bundle(args.out)
    print(f'Cost report of {bundle.prompt.id} ({bundle.status.value})')
    print(report_cost(bundle).table, end='')
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'batch': cmd_batch,
    'eval': cmd_eval,
    'replay-verify': cmd_replay_verify,
    'report': cmd_report,
}


def main(argv=None):
    """Entry point of the ``lodestar`` console script. Returns the exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, DatasetError) as exc:
        print(f'lodestar {args.command}: error: {exc}', file=sys.stderr)
        return EXIT_USAGE
    except (LodestarError, OSError) as exc:
        print(f'lodestar {args.command}: failed: {exc}', file=sys.stderr)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
