"""Orchestration of the `generate`, `verify`, `spectral` and `report` subcommands.

Each command resolves the experiment config, writes `manifest.json` (the full resolved config, itself a
valid config) next to its outputs and returns the exit code."""
import os
import sys

import numpy as np
from termcolor import colored
from terminaltables import AsciiTable

from dtsssi.core.config import ExperimentConfig
from dtsssi.core.errors import ConfigError, DtsssiError, SizeError, VerificationFailed
from dtsssi.core.scripts import DtsssiParameterParser
from dtsssi.evaluation.checks import run_checks
from dtsssi.export import exporter
from dtsssi.generation.generators import make_generator
from dtsssi.spectral import coefficients, conditions

MANIFEST_JSON = 'manifest.json'
VERIFY_JSON = 'verify_report.json'
SPECTRAL_JSON = 'spectral_report.json'
TABLES_JSON = 'tables.json'
LAYER_ENERGY_CSV = 'layer_energy.csv'


def _experiment(config, overrides=(), seed=None, out=None):
    if isinstance(config, ExperimentConfig):
        return config
    return ExperimentConfig.resolve(config, overrides, seed, out)


def _controller(experiment):
    output = experiment.output
    return exporter.EnsembleExportController(output['directory'], output['formats'], output['compression'])


def _write_manifest(experiment):
    os.makedirs(experiment.output['directory'], exist_ok=True)
    exporter.write_json(experiment.to_json(), os.path.join(experiment.output['directory'], MANIFEST_JSON))


def generate_ensemble(experiment):
    gen = experiment.generator
    generator = make_generator(gen['kind'], experiment.generator_fields)
    print(colored(f'generating {gen["M"]} paths of "{gen["kind"]}" with master seed {experiment.master_seed}',
                  'green'))
    return generator.generate(gen['M'], experiment.master_seed, gen['workers'])


def _matches(ens, experiment):
    gen = experiment.generator
    generator = make_generator(gen['kind'], experiment.generator_fields)
    return (ens.meta.get('generator') == gen['kind'] and ens.meta.get('config') == generator.config.to_json()
            and ens.master_seed == experiment.master_seed and ens.M == gen['M'])


def obtain_ensemble(experiment):
    """The stored ensemble of the output directory, or a freshly generated one."""
    controller = _controller(experiment)
    try:
        ens = controller.load()
    except SizeError:
        if not experiment.output['generate_missing']:
            raise SizeError(f'missing ensemble in {experiment.output["directory"]}, run "generate" first')
        return generate_ensemble(experiment)
    if not _matches(ens, experiment):
        print(colored('the stored ensemble was drawn with another config, generating inline', 'yellow'))
        return generate_ensemble(experiment)
    print(colored(f'loaded {ens.M} stored paths from {experiment.output["directory"]}', 'green'))
    return ens


### generate ###
def cmd_generate(config, overrides=(), seed=None, out=None):
    experiment = _experiment(config, overrides, seed, out)
    ens = generate_ensemble(experiment)
    _write_manifest(experiment)
    written = _controller(experiment).export(ens)
    for path in written:
        print(f'wrote {path}')
    return 0


### verify ###
def verification_table(report):
    rows = [['check', 'test', 'statistic', 'p-value', 'decision']]
    for check in report['checks']:
        for r in check['reports']:
            rows.append([check['name'], r['name'], f'{r["statistic"]:.4f}', f'{r["p_value"]:.4g}', r['decision']])
        for key, ok in check['certificates'].items():
            rows.append([check['name'], key, '', '', 'holds' if ok else 'fails'])
    overall = report['overall']
    title = f'verification (Holm, alpha={overall["alpha"]}): {"PASS" if overall["passed"] else "FAIL"}'
    return AsciiTable(rows, title).table


def cmd_verify(config, overrides=(), seed=None, out=None, strict=False):
    experiment = _experiment(config, overrides, seed, out)
    verification = experiment.verification
    ens = obtain_ensemble(experiment)
    report = run_checks(ens, verification['checks'], verification['alpha'])
    report['ensemble'] = {'generator': ens.meta.get('generator'), 'M': ens.M, 'N': ens.N,
                          'master_seed': ens.master_seed}
    _write_manifest(experiment)
    exporter.write_json(report, os.path.join(experiment.output['directory'], VERIFY_JSON))
    print('\n', verification_table(report), sep='')
    if strict and not report['overall']['passed']:
        raise VerificationFailed(f'verification rejected: {report["overall"]["rejected"]} '
                                 f'{report["overall"]["failed_certificates"]}')
    return 0


### spectral ###
def _condition_reports(tables, ens, spectral):
    alpha, reports = spectral['alpha'], {}
    for name in spectral['checks']:
        if name == 'rotation':
            reports[name] = conditions.check_rotation(tables, alpha).to_json()
        elif name == 'scaling_relation':
            reports[name] = conditions.check_scaling_relation(tables, alpha).to_json()
        elif name == 'q_permutation':
            reports[name] = conditions.check_q_permutation(tables, spectral['q'], alpha).to_json()
        elif name == 'offgrid':
            offgrid = spectral['offgrid']
            report = conditions.offgrid_energy(ens, offgrid['lam'], offgrid['m'], tables[0].p, tables[0].H,
                                               spectral['R'])
            reports[name] = {**report.to_json(), 'passed': report.holds}
        elif name == 'tail':
            estimate, stderr = conditions.tail_energy(tables, spectral['tail_start'])
            energy1, _ = coefficients.layer_energy(tables, 1)
            bound = conditions.tail_bound(tables[0].p, tables[0].H, spectral['tail_start'], tables[0].M_max, energy1)
            reports[name] = {'M_start': spectral['tail_start'], 'estimate': estimate, 'stderr': stderr,
                             'bound': bound, 'passed': estimate <= bound + 4 * stderr}
        elif name == 'almost_period':
            second_moment = float(np.mean(ens.column(1) ** 2))
            tau = conditions.almost_period(spectral['epsilon'], tables[0].p, tables[0].H, second_moment)
            entry = {'epsilon': spectral['epsilon'], 'tau': tau}
            if tau <= ens.N:
                entry['increment_energy'] = conditions.increment_energy(ens, tau)
                entry['passed'] = entry['increment_energy'] <= spectral['epsilon']
            else:
                entry['note'] = f'tau = {tau} exceeds the path length, not checked'
                entry['passed'] = True
            reports[name] = entry
    return reports


def energy_table(rows, p):
    out = [['layer', 'm', 'energy', 'stderr', 'ratio']]
    for m, energy, stderr, ratio in rows:
        out.append([p ** m, m, f'{energy:.6g}', f'{stderr:.2g}', '' if np.isnan(ratio) else f'{ratio:.4f}'])
    return AsciiTable(out, 'layer energies').table


def cmd_spectral(config, overrides=(), seed=None, out=None, strict=False):
    experiment = _experiment(config, overrides, seed, out)
    spectral = experiment.spectral
    ens = obtain_ensemble(experiment)
    scaling = ens.meta.get('scaling', {})
    p = spectral['p'] or scaling.get('p') or experiment.generator.get('p')
    if p is None:
        raise ConfigError('the spectral command needs a prime p: set "spectral.p" for ensembles without one')
    tables = coefficients.coefficient_tables(ens, p, spectral['M_max'], spectral['R'], spectral['H'])
    directory = experiment.output['directory']
    _write_manifest(experiment)
    exporter.write_tables_json(tables, os.path.join(directory, TABLES_JSON), spectral['aggregate'])

    rows = conditions.layer_energies(tables)
    exporter.write_layer_energy_csv(rows, p, os.path.join(directory, LAYER_ENERGY_CSV))
    report = {'p': p, 'H': tables[0].H, 'M_max': spectral['M_max'], 'R': spectral['R'], 'n_tables': len(tables),
              'conditions': _condition_reports(tables, ens, spectral),
              'layer_energies': [{'m': m, 'energy': e, 'stderr': s, 'ratio': None if np.isnan(r) else r}
                                 for m, e, s, r in rows]}
    report['passed'] = all(c['passed'] for c in report['conditions'].values())
    exporter.write_json(report, os.path.join(directory, SPECTRAL_JSON))
    print('\n', energy_table(rows, p), sep='')
    for name, condition in report['conditions'].items():
        print(colored(f'{name}: {"accept" if condition["passed"] else "reject"}',
                      'green' if condition['passed'] else 'red'))
    if strict and not report['passed']:
        failed = [name for name, c in report['conditions'].items() if not c['passed']]
        raise VerificationFailed(f'spectral conditions rejected: {failed}')
    return 0


### report ###
def cmd_report(config, overrides=(), seed=None, out=None):
    """Summary tables of the reports found in the output directory."""
    experiment = _experiment(config, overrides, seed, out)
    directory = experiment.output['directory']
    found = {}
    verify_path, spectral_path = os.path.join(directory, VERIFY_JSON), os.path.join(directory, SPECTRAL_JSON)
    if os.path.isfile(verify_path):
        found['verify'] = exporter.read_json(verify_path)
        print('\n', verification_table(found['verify']), sep='')
    if os.path.isfile(spectral_path):
        found['spectral'] = exporter.read_json(spectral_path)
        rows = [(e['m'], e['energy'], e['stderr'], np.nan if e['ratio'] is None else e['ratio'])
                for e in found['spectral']['layer_energies']]
        print('\n', energy_table(rows, found['spectral']['p']), sep='')
        conditions_rows = [['condition', 'passed']] + [[name, str(c['passed'])]
                                                       for name, c in found['spectral']['conditions'].items()]
        print(AsciiTable(conditions_rows, 'spectral conditions').table)
    if not found:
        raise SizeError(f'no reports in {directory}, run "verify" or "spectral" first')
    return 0


COMMANDS = {'generate': cmd_generate, 'verify': cmd_verify, 'spectral': cmd_spectral, 'report': cmd_report}


def run(command, experiment, strict=False):
    if command in ('verify', 'spectral'):
        return COMMANDS[command](experiment, strict=strict)
    return COMMANDS[command](experiment)


def main(argv=None):
    try:
        args = DtsssiParameterParser().get_args(argv)
        return run(args.command, args.experiment, args.strict)
    except DtsssiError as e:
        print(colored(f'Error: {e}', 'red'), file=sys.stderr)
        return e.exit_code
    except (ValueError, AssertionError) as e:
        print(colored(f'Error: {e}', 'red'), file=sys.stderr)
        return ConfigError.exit_code
