"""Experiment configuration: one YAML (or JSON) document with strict sections.

Every key is checked against the defaults below, in the way `ParameterParser` checks a flat config;
values of the generator section are checked by the generator's own configuration class."""
import copy
import json
import os

import yaml

from dtsssi.core.errors import ConfigError
from dtsssi.core.padic import is_prime

SECTIONS = ('master_seed', 'generator', 'verification', 'spectral', 'output')
SPECTRAL_CHECKS = ('rotation', 'scaling_relation', 'q_permutation', 'offgrid', 'tail', 'almost_period')
OUTPUT_FORMATS = ('csv', 'h5')

# None marks optional values without a type to check against
DEFAULTS = {
    'master_seed': None,
    'generator': {'kind': 'type2_gaussian', 'M': 1000, 'workers': 1},
    'verification': {'alpha': 0.01, 'checks': []},
    'spectral': {'M_max': 3, 'R': 8, 'p': None, 'H': None, 'alpha': 0.01, 'checks': [], 'q': 3, 'aggregate': False,
                 'offgrid': {'lam': '1/3', 'm': 4}, 'tail_start': 2, 'epsilon': 0.1},
    'output': {'directory': 'dtsssi_output', 'formats': ['csv'], 'compression': 'gzip', 'generate_missing': True},
}
GENERATOR_KEYS = ('kind', 'M', 'workers')


def _type_ok(value, default):
    if default is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, type(default))


def _check_section(values, defaults, prefix):
    if not isinstance(values, dict):
        raise ConfigError(f'"{prefix}" must be a mapping, got {type(values).__name__}')
    for key, value in values.items():
        dotted = f'{prefix}.{key}'
        if key not in defaults:
            raise ConfigError(f'Parameter "{dotted}" from the config file is unknown')
        default = defaults[key]
        if isinstance(default, dict):
            _check_section(value, default, dotted)
        elif not _type_ok(value, default):
            raise ConfigError(f'Type of config parameter "{dotted}" must be {type(default).__name__}, '
                              f'got {type(value).__name__}')


def _merge(base, update):
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_checks(checks, known, section):
    for i, check in enumerate(checks):
        name = check if isinstance(check, str) else (check.get('name') if isinstance(check, dict) else None)
        if name is None:
            raise ConfigError(f'"{section}.checks[{i}]" must be a check name or a mapping with a "name"')
        if name not in known:
            raise ConfigError(f'check "{section}.checks[{i}]" = "{name}" is unknown, known checks: {sorted(known)}')


def validate(config):
    """Strict validation of a merged config; raises ConfigError naming the offending key."""
    for key in config:
        if key not in SECTIONS:
            raise ConfigError(f'Parameter "{key}" from the config file is unknown')
    seed = config['master_seed']
    if seed is None:
        raise ConfigError('"master_seed" is required, set it in the config file or pass --seed')
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f'"master_seed" must be an unsigned 64 bit integer, got {seed!r}')
    for section in ('verification', 'spectral', 'output'):
        _check_section(config[section], DEFAULTS[section], section)
    generator = config['generator']
    if not isinstance(generator, dict):
        raise ConfigError('"generator" must be a mapping')
    for key in GENERATOR_KEYS:
        if not _type_ok(generator.get(key), DEFAULTS['generator'][key]):
            raise ConfigError(f'Type of config parameter "generator.{key}" must be '
                              f'{type(DEFAULTS["generator"][key]).__name__}')
    if generator['M'] < 1 or generator['workers'] < 1:
        raise ConfigError('"generator.M" and "generator.workers" must be positive')

    # deferred, the check registry imports the generators
    from dtsssi.evaluation.checks import CHECKS
    from dtsssi.generation.generators import make_generator
    make_generator(generator['kind'], generator_fields(config))
    _check_checks(config['verification']['checks'], CHECKS, 'verification')
    _check_checks(config['spectral']['checks'], SPECTRAL_CHECKS, 'spectral')
    unknown = set(config['output']['formats']) - set(OUTPUT_FORMATS)
    if unknown:
        raise ConfigError(f'"output.formats" has unknown format(s) {sorted(unknown)}, known: {OUTPUT_FORMATS}')
    if config['spectral']['M_max'] < 1 or config['spectral']['R'] < 1:
        raise ConfigError('"spectral.M_max" and "spectral.R" must be positive')
    p = config['spectral']['p']
    if p is not None and (not isinstance(p, int) or isinstance(p, bool) or not is_prime(p)):
        raise ConfigError(f'"spectral.p" must be a prime, got {p!r}')
    return config


def load_yaml(path):
    if not os.path.isfile(path):
        raise ConfigError(f'config file {path} not found')
    with open(path) as f:
        try:
            # manifests are JSON, whose float syntax YAML 1.1 does not fully cover
            data = json.load(f) if path.endswith('.json') else yaml.safe_load(f)
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f'An error occured during parsing of the config file {path}: {e}')
    # an empty file yields None
    return data or {}


def parse_override(assignment):
    """'spectral.M_max=4' -> (['spectral', 'M_max'], 4); the value is read as YAML."""
    if '=' not in assignment:
        raise ConfigError(f'override "{assignment}" is not of the form dotted.key=value')
    key, raw = assignment.split('=', 1)
    parts = key.strip().split('.')
    if not all(parts):
        raise ConfigError(f'override key "{key}" is malformed')
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f'override value of "{key}" is not valid YAML: {e}')
    return parts, value


def apply_override(config, parts, value):
    node = config
    for i, part in enumerate(parts[:-1]):
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f'override "{".".join(parts)}": "{".".join(parts[:i + 1])}" is not a section')
        node = child
    node[parts[-1]] = value


def resolve(config=None, overrides=(), seed=None, out=None):
    """Defaults < config document < --set overrides < --seed / --out."""
    if config is None:
        config = {}
    elif isinstance(config, str):
        config = load_yaml(config)
    if not isinstance(config, dict):
        raise ConfigError('the config document must be a mapping')
    for key in config:
        if key not in SECTIONS:
            raise ConfigError(f'Parameter "{key}" from the config file is unknown')
    resolved = _merge(DEFAULTS, config)
    for assignment in overrides:
        apply_override(resolved, *parse_override(assignment))
    if seed is not None:
        resolved['master_seed'] = seed
    if out is not None:
        resolved['output']['directory'] = out
    return validate(resolved)


def generator_fields(config):
    """Keyword arguments of the generator configuration class."""
    return {k: v for k, v in config['generator'].items() if k not in GENERATOR_KEYS}


class ExperimentConfig(object):
    """Resolved and validated experiment configuration; `to_json` is the manifest."""

    def __init__(self, data):
        self.data = validate(_merge(DEFAULTS, data))

    @classmethod
    def resolve(cls, config=None, overrides=(), seed=None, out=None):
        return cls(resolve(config, overrides, seed, out))

    @property
    def master_seed(self):
        return self.data['master_seed']

    @property
    def generator(self):
        return self.data['generator']

    @property
    def verification(self):
        return self.data['verification']

    @property
    def spectral(self):
        return self.data['spectral']

    @property
    def output(self):
        return self.data['output']

    @property
    def generator_fields(self):
        return generator_fields(self.data)

    def to_json(self):
        return copy.deepcopy(self.data)
