"""
Command line entry point:

    pilotwave <subcommand> [--config scenario.yaml] [--seed 10] [--out runs] [--threads 4] [--verbose]

Exit status 0 on success, 1 for configuration errors, 2 for numerical failures
and 3 for rejected certifications.
"""
import argparse
import sys
import warnings
from typing import List
from pilotwave_study.utilities.common_config import common_config
from pilotwave_study.utilities.errors import CertificationError, ConfigError, NumericalError
from pilotwave_study.utilities.utils import misc_settings, seed_everything

SUBCOMMANDS = {
    'evolve': 'evolve the configured initial state and store snapshots',
    'trajectories': 'guide a Born-distributed ensemble and report equivariance',
    'double-slit': 'landing-site histogram of repeated two-slit runs',
    'gauge-compare': 'dual run with and without a phase gauge',
    'hmm-build': 'build a latent-field model for a density and certify it',
    'shoemaker': 'trace the three-civilization universe and search for a non-Markov witness',
    'phase-space': 'audits of the wave function phase space',
    'selftest': 'run the property test suite',
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='pilotwave', description='Pilot-wave dynamics as a hidden Markov model')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, help_text in SUBCOMMANDS.items():
        sub = common_config(subparsers.add_parser(name, help=help_text))
        if name == 'double-slit':
            sub.add_argument('--runs', type=int, default=None, help='number of runs (particles)')
        if name == 'shoemaker':
            sub.add_argument('--years', type=int, default=61, help='years to trace')
    return parser


def main(argv: List[str] = None) -> int:
    from pilotwave_study.scenarios.runners import RUNNERS

    try:
        config = build_parser().parse_args(argv)
    except SystemExit as exit_:
        # argparse exits with 2 on bad flags, which is reserved for numerical failures
        return 0 if exit_.code == 0 else ConfigError.exit_code
    if not config.verbose:
        warnings.simplefilter('ignore', category=UserWarning)
    try:
        misc_settings(config)
        seed_everything(config.seed)
        if config.command == 'selftest':
            return 0 if RUNNERS['selftest'](config) == 0 else CertificationError.exit_code
        RUNNERS[config.command](config)
    except (ConfigError, NumericalError, CertificationError) as err:
        print(f'{config.command}: {type(err).__name__}: {err}', file=sys.stderr)
        return err.exit_code
    except ValueError as err:
        # precondition failures surface as configuration problems
        print(f'{config.command}: ConfigError: {err}', file=sys.stderr)
        return ConfigError.exit_code
    finally:
        if getattr(config, 'logger', None) is not None:
            config.logger.finish()
    return 0


if __name__ == '__main__':
    sys.exit(main())
