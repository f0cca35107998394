"""
Experiment configuration: YAML files, dotted ``--set`` overrides and validation.

A configuration is a two-level tree ``section -> key -> value``. Resolution
order is built-in defaults, command defaults, the YAML file, then overrides
in the order given (last one wins).
"""

import copy
import logging
from dataclasses import dataclass

import yaml

from .engine.exceptions import ConfigurationError
from .engine.lindblad import DEFAULT_MEMORY_BUDGET, DENSE_LIMIT, FockConfig
from .engine.model import (
    CouplingSpec,
    EnsembleConfig,
    OscillatorParams,
    check_stability,
)
from .forms import SECTION_FORMS

logger = logging.getLogger(__name__)


DEFAULTS = {
    'oscillator': {
        'omega': 1.0,
        'kappa1': 0.1,
        'kappa2': 0.005,
        'drive_re': 0.0,
        'drive_im': 0.0,
    },
    'coupling': {
        'mu': 0.3,
        'gamma': 0.0,
        'topology': 'ring',
    },
    'ensemble': {
        'n_traj': 2000,
        'dt': 0.01,
        't_final': None,
        'seed': 0,
        'record_stride': 100,
        'block_size': 64,
        'pair_noise': 'factored',
        'noise_scale': 1.0,
        'initial_phase': 'fixed',
        'snapshot_times': [],
    },
    'fock': {
        'cutoff': None,
        'n_eigs': 20,
    },
    'experiment': {
        'n_list': None,
        'eval_time': 10000.0,
        'phase_time': 5000.0,
        'fit_start': None,
        'fit_end': None,
        'window': 'hann',
        'bins': 41,
        'hist_range': None,
    },
}


def default_tree():
    return copy.deepcopy(DEFAULTS)


def merge(tree, updates, origin='configuration'):
    """Overlay ``updates`` onto ``tree`` in place; unknown sections or keys are errors"""
    if updates is None:
        return tree
    if not isinstance(updates, dict):
        raise ConfigurationError(f"{origin} must be a mapping of sections, got {type(updates).__name__}")
    for section, values in updates.items():
        if section not in tree:
            raise ConfigurationError(f"{origin}: unknown section {section!r}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigurationError(f"{origin}: section {section!r} must be a mapping")
        for key, value in values.items():
            if key not in tree[section]:
                raise ConfigurationError(f"{origin}: unknown key {section}.{key}")
            tree[section][key] = value
    return tree


def read_config_file(path):
    try:
        with open(path, encoding='utf-8') as handle:
            return yaml.safe_load(handle) or {}
    except OSError as error:
        raise ConfigurationError(f"cannot read configuration {path}: {error}") from error
    except yaml.YAMLError as error:
        raise ConfigurationError(f"{path} is not valid YAML: {error}") from error


def parse_override(text):
    """Split ``section.key=value`` and parse the value as a YAML scalar"""
    dotted, separator, raw = text.partition('=')
    if not separator:
        raise ConfigurationError(f"override {text!r} is not of the form section.key=value")
    section, dot, key = dotted.strip().partition('.')
    if not dot or not section or not key:
        raise ConfigurationError(f"override key {dotted!r} must be section.key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as error:
        raise ConfigurationError(f"override {text!r}: {error}") from error
    return section, key, value


def apply_overrides(tree, overrides):
    for text in overrides or ():
        section, key, value = parse_override(text)
        merge(tree, {section: {key: value}}, origin=f'override {text!r}')
    return tree


def validate(tree):
    """Run every section through its form; all problems are reported at once"""
    cleaned = {}
    problems = []
    for section, form_class in SECTION_FORMS.items():
        form = form_class(data=tree[section])
        if form.is_valid():
            cleaned[section] = {name: form.cleaned_data[name] for name in tree[section]}
            continue
        for name, errors in form.errors.items():
            key = section if name == '__all__' else f'{section}.{name}'
            problems.extend(f'{key}: {message}' for message in errors)

    if not problems:
        setup = ExperimentSetup.from_tree(cleaned)
        try:
            check_stability(
                EnsembleConfig(dt=cleaned['ensemble']['dt']), setup.oscillator, setup.coupling
            )
        except ConfigurationError as error:
            problems.append(f'ensemble.dt: {error}')

    if problems:
        raise ConfigurationError('invalid configuration:\n  ' + '\n  '.join(problems))
    return cleaned


def load_config(path=None, overrides=(), command_defaults=None):
    """Resolved and validated configuration tree"""
    tree = default_tree()
    merge(tree, command_defaults, origin='command defaults')
    if path:
        merge(tree, read_config_file(path), origin=str(path))
    apply_overrides(tree, overrides)
    return validate(tree)


def dump_config(tree):
    return yaml.safe_dump(tree, sort_keys=False, default_flow_style=False)


def load_config_text(text):
    """Parse a dumped configuration back into a validated tree"""
    tree = default_tree()
    merge(tree, yaml.safe_load(text))
    return validate(tree)


@dataclass(frozen=True)
class ExperimentSetup:
    """Engine objects built from a validated configuration tree"""

    tree: dict
    oscillator: OscillatorParams
    coupling: CouplingSpec

    @classmethod
    def from_tree(cls, tree):
        osc = tree['oscillator']
        coupling = tree['coupling']
        return cls(
            tree=tree,
            oscillator=OscillatorParams(
                omega=osc['omega'],
                kappa1=osc['kappa1'],
                kappa2=osc['kappa2'],
                drive=complex(osc['drive_re'], osc['drive_im']),
            ),
            coupling=CouplingSpec(
                mu=coupling['mu'], gamma=coupling['gamma'], topology=coupling['topology']
            ),
        )

    @property
    def experiment(self):
        return self.tree['experiment']

    @property
    def seed(self):
        return self.tree['ensemble']['seed']

    def n_list(self, fallback):
        return list(self.experiment['n_list'] or fallback)

    def ensemble(self, n_osc, **changes):
        values = dict(self.tree['ensemble'])
        values['t_final'] = values['t_final'] or 0.0
        values['snapshot_times'] = tuple(values['snapshot_times'])
        values.update(changes)
        return EnsembleConfig(n_osc=n_osc, **values)

    def fock(self, n_modes, cutoff=None, memory_budget=DEFAULT_MEMORY_BUDGET, dense_limit=DENSE_LIMIT):
        return FockConfig(
            cutoff=cutoff or self.tree['fock']['cutoff'],
            n_modes=n_modes,
            memory_budget=memory_budget,
            dense_limit=dense_limit,
        )
