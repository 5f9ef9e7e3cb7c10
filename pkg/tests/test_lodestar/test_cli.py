import filecmp
import json
import os
import re

import pytest
import yaml

from lodestar.cli import (EXIT_COVERAGE, EXIT_FAILED, EXIT_OK, EXIT_USAGE, UsageError, build_parser, main,
                          parse_cassette_spec)
from lodestar.utils.http_wrapper import RequestError
from .scenarios import one_round
from .scripted_backends import ScriptedModel

HERE = 'tests.test_lodestar.test_cli'
GOLDEN_ONE_ROUND = os.path.join(os.path.dirname(__file__), 'fixtures', 'golden', 'one_round')
DOCS_CLI = os.path.join(os.path.dirname(__file__), os.pardir, os.pardir, 'docs', 'cli.rst')


def scenario_backend(settings):
    return one_round().backends()[settings['scenario_binding']]


def judge_backend(settings):
    return ScriptedModel()


class _RefusingGenerator():
    def generate(self, prompt, references):
        raise RequestError('content policy', 400, 'Bad Request', '')


def refusing_generator(settings):
    return _RefusingGenerator()


def _gateways(generator=None):
    gateways = {binding: {'backend': f'{HERE}:scenario_backend', 'scenario_binding': binding, 'rate_limit': None}
                for binding in ('model', 'search', 'reader', 'image_fetch', 'image_generator')}
    gateways['judge'] = {'backend': f'{HERE}:judge_backend', 'rate_limit': None}
    if generator is not None:
        gateways['image_generator']['backend'] = f'{HERE}:{generator}'
    return gateways


@pytest.fixture
def config_file(tmp_path):
    def writer(generator=None, **settings):
        path = tmp_path / 'config.yml'
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump({'gateways': _gateways(generator), **settings}, f)
        return str(path)
    return writer


@pytest.fixture
def dataset_file(tmp_path):
    def writer(extra_prompts=()):
        prompt = one_round().prompt
        document = {
            'prompts': [{'id': prompt.id, 'text': prompt.text, 'entity_class': prompt.entity_class},
                        *[{'id': p, 'text': f'Prompt {p}', 'entity_class': 'Food'} for p in extra_prompts]],
            'features': [{'prompt_id': prompt.id, 'statement': 'The N700S is white.', 'concept': 'PF'}],
            'questions': [{'prompt_id': prompt.id, 'statement': 'The train is white.', 'concept': 'PF'},
                          {'prompt_id': prompt.id, 'statement': 'The station is Tokyo.', 'concept': 'CC'}],
        }
        path = tmp_path / 'dataset.yml'
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(document, f)
        return str(path)
    return writer


@pytest.fixture
def recorded_run(config_file, dataset_file, tmp_path):
    out = str(tmp_path / 'runs' / 'train')
    assert main(['run', '--config', config_file(), '--dataset', dataset_file(), '--prompt', 'train',
                 '--out', out]) == EXIT_OK
    return out


@pytest.mark.parametrize('testdescr,spec,expected', [
    ('record with path', 'record:runs/c.jsonl', ('record', 'runs/c.jsonl')),
    ('record without path', 'record', ('record', None)),
    ('replay', 'replay:c.jsonl', ('replay', 'c.jsonl')),
    ('off', 'off', ('off', None)),
])
def test_parse_cassette_spec(spec, expected, testdescr):
    assert parse_cassette_spec(spec) == expected


@pytest.mark.parametrize('spec', ['replay', 'tape:x', 'off:x'])
def test_parse_cassette_spec_invalid(spec):
    with pytest.raises(UsageError):
        parse_cassette_spec(spec)


def test_run_writes_run_directory(capsys, recorded_run):
    for name in ('enriched_prompt.json', 'cost_report.json', 'cassette.jsonl', 'run.json',
                 os.path.join('kb', 'manifest.json'), os.path.join('artifact', 'manifest.json')):
        assert os.path.exists(os.path.join(recorded_run, name)), name
    assert 'Run of train done' in capsys.readouterr().out


def test_run_with_prompt_text(config_file, tmp_path):
    out = str(tmp_path / 'free')
    assert main(['run', '--config', config_file(), '--prompt', one_round().prompt.text, '--out', out,
                 '--policy', 'fixed:1', '--skip-generation']) == EXIT_OK
    with open(os.path.join(out, 'run.json'), 'r', encoding='utf-8') as f:
        run_info = json.load(f)
    assert re.fullmatch(r'prompt-[0-9a-f]{12}', run_info['prompt']['id'])
    assert run_info['config']['policy'] == 'fixed:1'
    assert run_info['config']['skip_generation'] is True
    assert not os.path.exists(os.path.join(out, 'artifact'))


def test_replay_verify_identical(recorded_run, capsys):
    assert main(['replay-verify', '--out', recorded_run]) == EXIT_OK
    assert 'identical' in capsys.readouterr().out


def test_replay_verify_detects_edits(recorded_run, capsys):
    path = os.path.join(recorded_run, 'enriched_prompt.json')
    with open(path, 'r', encoding='utf-8') as f:
        enriched = json.load(f)
    enriched['prompt_text'] += ' Edited.'
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(enriched, f)

    assert main(['replay-verify', '--out', recorded_run]) == EXIT_FAILED
    assert 'diverges in enriched_prompt.json' in capsys.readouterr().err


def test_resume_of_finished_run_makes_no_calls(recorded_run, config_file, dataset_file):
    with open(os.path.join(recorded_run, 'cassette.jsonl'), 'rb') as f:
        recorded = f.read()

    assert main(['run', '--config', config_file(), '--dataset', dataset_file(), '--prompt', 'train',
                 '--out', recorded_run, '--resume']) == EXIT_OK
    with open(os.path.join(recorded_run, 'cassette.jsonl'), 'rb') as f:
        assert f.read() == recorded


def test_failed_run_exit_code(config_file, tmp_path, capsys):
    code = main(['run', '--config', config_file(generator='refusing_generator'), '--prompt',
                 one_round().prompt.text, '--out', str(tmp_path / 'failed')])
    assert code == EXIT_FAILED
    assert 'Image generation failed' in capsys.readouterr().err


@pytest.mark.parametrize('testdescr,argv', [
    ('missing config', ['run', '--config', 'does/not/exist.yml', '--prompt', 'x', '--out', 'o']),
    ('bad cassette', ['run', '--prompt', 'x', '--out', 'o', '--cassette', 'tape']),
    ('bad override', ['run', '--prompt', 'x', '--out', 'o', '--set', 'max_rounds']),
    ('unknown key', ['run', '--prompt', 'x', '--out', 'o', '--set', 'temperature=2']),
    ('bad policy', ['run', '--prompt', 'x', '--out', 'o', '--policy', 'fixed:0']),
    ('replay without run', ['replay-verify', '--out', 'no/such/run']),
    ('report without run', ['report', '--out', 'no/such/run']),
])
def test_usage_errors(argv, testdescr, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv('LODESTAR_CONFIG_JSON', raising=False)
    monkeypatch.delenv('LODESTAR_CONFIG_PATH', raising=False)
    assert main(argv) == EXIT_USAGE


@pytest.mark.parametrize('argv', [['run', '--prompt', 'x'], ['fly'], []])
def test_argument_errors_exit_with_usage_code(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == EXIT_USAGE


def test_batch_eval_and_report(config_file, dataset_file, tmp_path, capsys):
    config, dataset, out = config_file(), dataset_file(), str(tmp_path / 'runs')

    assert main(['batch', '--config', config, '--dataset', dataset, '--out', out]) == EXIT_OK
    assert main(['eval', '--config', config, '--dataset', dataset, '--out', out]) == EXIT_OK
    assert os.path.exists(os.path.join(out, 'report.json'))
    assert os.path.exists(os.path.join(out, 'judge_cassette.jsonl'))
    capsys.readouterr()

    assert main(['report', '--out', out]) == EXIT_OK
    assert capsys.readouterr().out.startswith('Coverage: 1/1 prompts (100.0%)')
    assert main(['report', '--out', os.path.join(out, 'train')]) == EXIT_OK
    assert 'Cost report of train (Done)' in capsys.readouterr().out

    os.rename(os.path.join(out, 'judge_cassette.jsonl'), os.path.join(tmp_path, 'judge.jsonl'))
    judge_cassette = f"replay:{os.path.join(tmp_path, 'judge.jsonl')}"
    assert main(['eval', '--config', config, '--dataset', dataset, '--out', out,
                 '--judge-cassette', judge_cassette]) == EXIT_OK


def test_eval_below_min_coverage(recorded_run, config_file, dataset_file, capsys):
    dataset = dataset_file(extra_prompts=['ghost'])
    out = os.path.dirname(recorded_run)
    assert main(['eval', '--config', config_file(), '--dataset', dataset, '--out', out]) == EXIT_OK
    code = main(['eval', '--config', config_file(), '--dataset', dataset, '--out', out,
                 '--set', 'min_coverage=0.9'])
    assert code == EXIT_COVERAGE
    assert 'below min_coverage' in capsys.readouterr().err


def _documented_flags():
    with open(DOCS_CLI, 'r', encoding='utf-8') as f:
        return set(re.findall(r'--[a-z][a-z-]*', f.read()))


def test_documented_flags_match_parser():
    subparsers = build_parser()._subparsers._group_actions[0].choices
    parser_flags = {option for subparser in subparsers.values() for action in subparser._actions
                    for option in action.option_strings if option.startswith('--')}
    assert _documented_flags() == parser_flags


def test_malformed_yaml_config_is_usage_error(tmp_path, capsys):
    config = tmp_path / 'config.yml'
    config.write_text('policy: [adaptive\n', encoding='utf-8')

    assert main(['run', '--config', str(config), '--prompt', 'x', '--out', str(tmp_path / 'o')]) == EXIT_USAGE
    assert 'not valid YAML' in capsys.readouterr().err


def test_malformed_env_config_is_usage_error(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv('LODESTAR_CONFIG_JSON', '{"policy": ')

    assert main(['run', '--prompt', 'x', '--out', str(tmp_path / 'o')]) == EXIT_USAGE
    assert 'not valid JSON' in capsys.readouterr().err


def test_unwritable_output_is_runtime_failure(config_file, tmp_path, capsys):
    blocker = tmp_path / 'blocker'
    blocker.write_text('', encoding='utf-8')

    code = main(['run', '--config', config_file(), '--prompt', one_round().prompt.text,
                 '--out', str(blocker / 'run')])

    assert code == EXIT_FAILED
    assert 'lodestar run: failed:' in capsys.readouterr().err


def test_run_replays_committed_cassette(dataset_file, tmp_path, capsys):
    unloadable = {binding: {'backend': 'no_such_module:factory', 'rate_limit': None}
                  for binding in ('model', 'judge', 'search', 'reader', 'image_fetch', 'image_generator')}
    config = tmp_path / 'offline.yml'
    with open(config, 'w', encoding='utf-8') as f:
        yaml.safe_dump({'gateways': unloadable}, f)
    out = str(tmp_path / 'replayed')

    code = main(['run', '--config', str(config), '--dataset', dataset_file(), '--prompt', 'train',
                 '--cassette', f"replay:{os.path.join(GOLDEN_ONE_ROUND, 'cassette.jsonl')}", '--out', out])

    assert code == EXIT_OK, capsys.readouterr().err
    for name in ('enriched_prompt.json', 'cost_report.json', os.path.join('kb', 'manifest.json')):
        assert filecmp.cmp(os.path.join(GOLDEN_ONE_ROUND, name), os.path.join(out, name), shallow=False), name
