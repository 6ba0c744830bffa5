import argparse
from abc import ABC, abstractmethod
from importlib.metadata import version, PackageNotFoundError
from pprint import pprint

from termcolor import colored

from dtsssi.core.config import ExperimentConfig


def package_version():
    try:
        return version('dtsssi')
    except PackageNotFoundError:
        return 'unknown'


class ParameterParser(ABC):
    """Bundles code that parses script parameters from the command line and a config file."""

    def __init__(self, config_file_path=''):
        # no argparse defaults except for the config file itself, so that only given flags
        # take precedence over the config file
        self.parser = argparse.ArgumentParser(argument_default=argparse.SUPPRESS)
        self.io_group = self.parser.add_argument_group("Data input and output")
        self.io_group.add_argument('--config', '--config-path', dest='config', type=str, default=config_file_path,
                                   help='Experiment config in form of a YAML or JSON file with lower priority than '
                                        'parameters given on the command line.')
        self.io_group.add_argument('--out', type=str,
                                   help='Output directory, overrides "output.directory" of the config.')

        self.run_group = self.parser.add_argument_group("Run parameters")
        self.run_group.add_argument('--seed', type=int,
                                    help='Master seed (unsigned 64 bit), overrides "master_seed" of the config.')
        self.run_group.add_argument('--set', dest='overrides', action='append', metavar='KEY=VALUE',
                                    help='Override a config value by its dotted key, e.g. --set spectral.M_max=4. '
                                         'The value is read as YAML. Can be repeated.')
        self.run_group.add_argument('--strict', action='store_true',
                                    help='Exit with code 4 when a verification or condition check rejects.')
        self.parser.add_argument('--version', action='version', version='%(prog)s ' + package_version())
        self.defaults = {'overrides': [], 'strict': False, 'seed': None, 'out': None}

    @abstractmethod
    def check_args(self, args):
        pass

    def load_and_merge_parameters(self, args):
        # the experiment config itself is resolved (and strictly checked) separately
        args = argparse.Namespace(**{**self.defaults, **vars(args)})
        args.experiment = ExperimentConfig.resolve(args.config or None, args.overrides, args.seed, args.out)
        return args

    def get_args(self, argv=None):
        args = self.parser.parse_args(argv)
        args = self.load_and_merge_parameters(args)
        self.check_args(args)

        print(colored('Dtsssi.py config: ', 'yellow'))
        pprint(args.experiment.to_json())
        print()
        return args


class DtsssiParameterParser(ParameterParser):
    COMMANDS = ('generate', 'verify', 'spectral', 'report')

    def __init__(self, config_file_path=''):
        super().__init__(config_file_path)
        self.parser.add_argument('command', choices=self.COMMANDS,
                                 help='generate: write an ensemble; verify: run the verification checks; '
                                      'spectral: coefficient tables and condition checks; '
                                      'report: summarize the reports of an output directory.')

    def check_args(self, args):
        assert args.command in self.COMMANDS, f'unknown command {args.command}'
