"""Provides configuration management for lodestar runs."""
from collections import namedtuple
from contextlib import contextmanager
from copy import deepcopy
import os
import logging
import json
import re
import sys
import warnings

import yaml

from .utils import LodestarError, NoEvidenceWarning

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

POLICIES = ('adaptive', 'fixed')
MODALITIES = ('both', 'text', 'image')
CONDITIONS = ('retrieval', 'direct', 'prompt_enhanced')
ABLATIONS = ('bootstrap', 'accumulation', 'refinement', 'extension')
CASSETTE_MODES = ('record', 'replay', 'off')

# environment variables holding the API keys, by gateway binding name
API_KEY_ENV = {
    'model': 'ORIG_MODEL_KEY',
    'judge': 'ORIG_MODEL_KEY',
    'search': 'ORIG_SEARCH_KEY',
    'reader': 'ORIG_READER_KEY',
    'image_generator': 'ORIG_IMAGEGEN_KEY',
}

DEFAULT_GATEWAYS = {
    'model': {'backend': 'http', 'base_url': 'https://api.openai.com/v1', 'model': 'gpt-4o',
              'rate_limit': 5, 'timeout': 120},
    'judge': {'backend': 'http', 'base_url': 'https://api.openai.com/v1', 'model': 'gpt-4o',
              'rate_limit': 5, 'timeout': 120},
    'search': {'backend': 'http', 'base_url': 'https://google.serper.dev', 'rate_limit': 5, 'timeout': 30,
               'region': 'us', 'language': 'en'},
    'reader': {'backend': 'http', 'base_url': 'https://r.jina.ai', 'rate_limit': 5, 'timeout': 60},
    'image_fetch': {'backend': 'http', 'rate_limit': 10, 'timeout': 30},
    'image_generator': {'backend': 'stub', 'base_url': None, 'model': None, 'rate_limit': 1, 'timeout': 300},
}

_DEFAULTS = {
    'policy': 'adaptive',
    'max_rounds': 3,
    'keep_pages': 2,
    'keep_images': 5,
    'digest_max_chars': 12000,
    'excerpt_chars': 1500,
    'skip_generation': False,
    'modalities': 'both',
    'condition': 'retrieval',
    'ablations': (),
    'cassette_mode': 'record',
    'cassette_path': None,
    'retry_limit': 3,
    'concurrency': 4,
    'batch_workers': 2,
    'min_coverage': 0.0,
    'gateways': None,
}
CONFIG_PROPERTIES = tuple(_DEFAULTS)

_POLICY_PATTERN = re.compile(r'^(adaptive|fixed)(?:[:(](\d+)\)?)?$')


class ConfigError(LodestarError):
    """Raised when a run configuration is invalid or references unknown keys."""


@contextmanager
def try_log(exception, msg):
    """Run code in try-except clause, logs message when exception is called and re-raises exception."""
    try:
        yield
    except exception as exc:
        if hasattr(msg, "__call__"):
            msg = msg(exc)
        LOG.error(msg)
        raise


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def parse_policy_spec(spec):
    """Split a policy string like ``adaptive``, ``fixed:2`` or ``fixed(2)`` into ``(kind, rounds)``."""
    match = _POLICY_PATTERN.fullmatch(str(spec).strip().lower())
    if match is None:
        raise ConfigError(f"Invalid policy '{spec}'. Use 'adaptive' or 'fixed:<n>'.")
    kind, rounds = match.groups()
    if kind == 'fixed':
        if rounds is None or int(rounds) < 1:
            raise ConfigError(f"Fixed-round policy needs a round count >= 1, got '{spec}'.")
        return kind, int(rounds)
    if rounds is not None:
        raise ConfigError(f"The adaptive policy takes no round count, got '{spec}'.")
    return kind, None


def _merge_gateways(gateways):
    merged = deepcopy(DEFAULT_GATEWAYS)
    for service, settings in (gateways or {}).items():
        if service not in merged:
            raise ConfigError(f"Unknown gateway binding '{service}'. Known bindings: {sorted(merged)}")
        if not isinstance(settings, dict):
            raise ConfigError(f"Gateway binding '{service}' must be a mapping.")
        merged[service].update(settings)
    return merged


def _parse_override_value(raw_value):
    """Parse an override value as a YAML scalar. Only 'true' and 'false' become booleans, so 'off' stays a string."""
    if not raw_value.strip():
        return None
    value = yaml.safe_load(raw_value)
    if isinstance(value, bool) and raw_value.strip().lower() not in ('true', 'false'):
        return raw_value.strip()
    return value


class RunConfig(namedtuple('RunConfig', CONFIG_PROPERTIES, defaults=tuple(_DEFAULTS.values()))):
    """Stores the config of a pipeline run.

    Construct with :meth:`from_dict`, :meth:`from_yaml`, :meth:`from_env` or :meth:`load`, all of which merge the
    default gateway bindings and validate the result.
    """

    @classmethod
    def from_dict(cls, config_dict=None):
        """Create a validated config from a (possibly partial) dict."""
        config_dict = dict(config_dict or {})
        unknown = sorted(set(config_dict) - set(CONFIG_PROPERTIES))
        if unknown:
            raise ConfigError(f'Unknown configuration parameter(s): {unknown}')
        config_dict['gateways'] = _merge_gateways(config_dict.get('gateways'))
        if config_dict.get('cassette_mode') is False:  # unquoted `off` in YAML
            config_dict['cassette_mode'] = 'off'
        if config_dict.get('ablations') is not None:
            config_dict['ablations'] = tuple(config_dict['ablations'])
        config = cls(**config_dict)
        config.validate()
        return config

    @classmethod
    def from_env(cls):
        """Load config from environment.

        Uses ``LODESTAR_CONFIG_JSON`` in environment. Value needs to be JSON encoded.
        """
        try:
            config_dict = json.loads(os.environ['LODESTAR_CONFIG_JSON'])
        except ValueError as exc:
            raise ConfigError(f'LODESTAR_CONFIG_JSON is not valid JSON: {exc}') from exc
        if config_dict is not None and not isinstance(config_dict, dict):
            raise ConfigError('LODESTAR_CONFIG_JSON must contain a JSON object.')
        return cls.from_dict(config_dict)

    @classmethod
    def from_yaml(cls, path):
        """Load config from YAML file."""
        with open(path, 'r', encoding='utf-8') as f:
            try:
                config_dict = yaml.safe_load(f)
            except yaml.YAMLError as exc:
                raise ConfigError(f'Config file {path} is not valid YAML: {exc}') from exc
        if config_dict is not None and not isinstance(config_dict, dict):
            raise ConfigError(f'Config file {path} must contain a mapping at the top level.')
        return cls.from_dict(config_dict)

    @classmethod
    def load(cls, path=None):
        """Load the run config from an explicit path, the environment or a YAML file.

        Order: explicit ``path``, ``LODESTAR_CONFIG_JSON``, ``LODESTAR_CONFIG_PATH``, ``config.yml`` in the current
        directory, ``config.yml`` next to the main script. Falls back to defaults when nothing is found.
        If there is an error during one attempt the load will fail (no further methods will be tried).
        """
        _configure_lodestar()
        if path is not None:
            if not os.path.exists(path):
                raise ConfigError(f'Config file not found: {path}')
            with try_log(Exception, f'Error while loading the configuration from YAML file at {path}.'):
                return cls.from_yaml(path)

        if os.getenv('LODESTAR_CONFIG_JSON') is None:
            LOG.debug('LODESTAR_CONFIG_JSON not found in env. skipping config load from env.')
        else:
            LOG.debug('found LODESTAR_CONFIG_JSON in env. trying to load config from env.')
            with try_log(Exception, 'Error while loading the configuration from LODESTAR_CONFIG_JSON.'):
                config = cls.from_env()
            LOG.info('Successfully loaded config from environment.')
            return config

        yaml_paths = [os.getenv('LODESTAR_CONFIG_PATH', os.path.join(os.path.abspath(os.curdir), 'config.yml')),
                      os.path.join(os.path.abspath(os.path.dirname(sys.argv[0])), 'config.yml')]
        yaml_paths = [p for p in yaml_paths if os.path.exists(p)]
        try:
            yaml_config_path = yaml_paths[0]
        except IndexError:
            LOG.debug('no config YAML file found. using defaults.')
            return cls.from_dict()

        LOG.debug('found config file at %s. trying YAML load', yaml_config_path)
        with try_log(Exception, f'Error while loading the configuration from YAML file at {yaml_config_path}.'):
            config = cls.from_yaml(yaml_config_path)
        LOG.info('Successfully loaded config from YAML file.')
        return config

    def with_overrides(self, overrides=()):
        """Return a copy with ``key=value`` overrides applied.

        Dotted keys address gateway settings, e.g. ``gateways.model.rate_limit=2``.
        Values are parsed as YAML scalars so ``true``, ``3`` and ``0.5`` get their natural types.
        """
        config_dict = self._asdict()
        config_dict['gateways'] = deepcopy(self.gateways)
        for override in overrides:
            key, sep, raw_value = override.partition('=')
            key = key.strip()
            if not sep or not key:
                raise ConfigError(f"Override '{override}' is not of the form key=value.")
            value = _parse_override_value(raw_value)
            path = key.split('.')
            if path[0] not in CONFIG_PROPERTIES:
                raise ConfigError(f"Unknown configuration key '{key}' in override.")
            if path[0] == 'gateways':
                if len(path) != 3 or path[1] not in config_dict['gateways']:
                    raise ConfigError(f"Gateway overrides must look like gateways.<binding>.<setting>, got '{key}'.")
                config_dict['gateways'][path[1]][path[2]] = value
            elif len(path) > 1:
                raise ConfigError(f"Configuration key '{path[0]}' has no nested settings.")
            else:
                config_dict[key] = value
            LOG.debug('Applied config override %s=%r', key, value)
        return RunConfig.from_dict(config_dict)

    def validate(self):
        """Check value ranges and enumerations, raise ConfigError on the first violation."""
        kind, rounds = parse_policy_spec(self.policy)
        if not _is_int(self.max_rounds) or self.max_rounds < 1:
            raise ConfigError(f'max_rounds must be an integer >= 1, got {self.max_rounds!r}.')
        if kind == 'fixed' and rounds > self.max_rounds:
            raise ConfigError(f'Fixed-round policy with {rounds} rounds exceeds max_rounds={self.max_rounds}.')
        for name in ('keep_pages', 'keep_images', 'retry_limit', 'concurrency', 'batch_workers', 'excerpt_chars'):
            value = getattr(self, name)
            if not _is_int(value) or value < 1:
                raise ConfigError(f'{name} must be an integer >= 1, got {value!r}.')
        if not _is_int(self.digest_max_chars) or self.digest_max_chars < 256:
            raise ConfigError(f'digest_max_chars must be an integer >= 256, got {self.digest_max_chars!r}.')
        if self.modalities not in MODALITIES:
            raise ConfigError(f'modalities must be one of {MODALITIES}, got {self.modalities!r}.')
        if self.condition not in CONDITIONS:
            raise ConfigError(f'condition must be one of {CONDITIONS}, got {self.condition!r}.')
        bad_ablations = [a for a in self.ablations if a not in ABLATIONS]
        if bad_ablations:
            raise ConfigError(f'Unknown ablation(s) {bad_ablations}. Known ablations: {ABLATIONS}.')
        if self.cassette_mode not in CASSETTE_MODES:
            raise ConfigError(f'cassette_mode must be one of {CASSETTE_MODES}, got {self.cassette_mode!r}.')
        if self.cassette_mode == 'replay' and not self.cassette_path:
            raise ConfigError('cassette_mode "replay" needs a cassette_path.')
        if not isinstance(self.min_coverage, (int, float)) or isinstance(self.min_coverage, bool) \
                or not 0.0 <= self.min_coverage <= 1.0:
            raise ConfigError(f'min_coverage must be within [0, 1], got {self.min_coverage!r}.')
        if not isinstance(self.skip_generation, bool):
            raise ConfigError(f'skip_generation must be a boolean, got {self.skip_generation!r}.')

    def to_dict(self):
        """Return a JSON-serializable dict of the config."""
        config_dict = self._asdict()
        config_dict['ablations'] = list(self.ablations)
        config_dict['gateways'] = deepcopy(self.gateways)
        return config_dict


def _configure_lodestar():
    warnings.filterwarnings("always", category=NoEvidenceWarning,
                            append=True)  # simpler for the user to override this setting
