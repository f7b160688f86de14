"""
tidalfarm CLI

Commands
--------
tidalfarm validate    --scenario PATH            Check a scenario file and print "valid" or its problems
tidalfarm simulate    --scenario PATH [--density FILE]
                                                 Forward run (no farm unless a density table is given)
tidalfarm optimize    --scenario PATH            Optimize the turbine density
tidalfarm convert     --scenario PATH [--density FILE] [--seed INT] [--count INT]
                                                 Turn an optimized density into turbine positions
tidalfarm taylor-test --scenario PATH            Verify the adjoint gradient

Common flags
  --out DIR               Artifact directory (default: the scenario's "output")
  --threads INT           Threads of the numerical libraries
  --steady / --transient  Override the simulation mode
  --log-level LEVEL       DEBUG, INFO, WARNING, ERROR or CRITICAL

Exit status: 0 on success, 2 for an invalid scenario, 1 for any other failure.
Failures print one line on stderr: error code=<code> message="<text>"
"""
import argparse
import logging
import os
import sys
from pathlib import Path

from tidalfarm.config.manager import ConfigManager
from tidalfarm.errors import TidalFarmError
from tidalfarm.log_config import setup_logging
from tidalfarm.version import __version__

logger = logging.getLogger(__name__)

THREAD_VARIABLES = ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS')
VALIDATION_PREFIX = 'config.'


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _error_line(code: str, message: str) -> str:
    return f'error code={code} message="{message}"'.replace('\n', ' ')


def _apply_threads(args) -> int:
    """
    Export the thread count before numpy and scipy are imported; the
    numerical modules are only imported inside the command functions.
    """
    threads = args.threads
    if threads is None:
        threads = ConfigManager(args.scenario).get('threads', 0)
    if threads:
        for name in THREAD_VARIABLES:
            os.environ[name] = str(threads)
    return threads or 0


def _overrides(args) -> dict:
    overrides = {}
    if args.mode:
        overrides['simulation.mode'] = args.mode
    if args.out:
        overrides['output'] = str(args.out)
    if args.log_level:
        overrides['logging.log_level'] = args.log_level.upper()
    if getattr(args, 'seed', None) is not None:
        overrides['layout.seed'] = args.seed
    if getattr(args, 'count', None) is not None:
        overrides['layout.count'] = args.count
    return overrides


def _load(args):
    from tidalfarm.config.scenario import load_scenario
    scenario = load_scenario(args.scenario, _overrides(args))
    setup_logging(scenario.log_level, scenario.log_file or None)
    return scenario


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    from tidalfarm.config.scenario import validate_scenario
    problems = validate_scenario(args.scenario, _overrides(args))
    if problems:
        for problem in problems:
            print(problem)
        return 2
    print('valid')
    return 0


def cmd_simulate(args) -> int:
    from tidalfarm.main import simulate
    simulate(_load(args), density_path=args.density)
    return 0


def cmd_optimize(args) -> int:
    from tidalfarm.main import optimize
    optimize(_load(args))
    return 0


def cmd_convert(args) -> int:
    from tidalfarm.main import convert
    convert(_load(args), density_path=args.density)
    return 0


def cmd_taylor_test(args) -> int:
    from tidalfarm.main import taylor
    passed = taylor(_load(args))
    if not passed:
        print(_error_line('adjoint.taylor', 'gradient failed the Taylor test'), file=sys.stderr)
    return 0 if passed else 1


COMMANDS = {
    'validate': cmd_validate,
    'simulate': cmd_simulate,
    'optimize': cmd_optimize,
    'convert': cmd_convert,
    'taylor-test': cmd_taylor_test,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='tidalfarm',
        description='Continuous tidal farm design',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument('--version', action='version', version=f'tidalfarm {__version__}')
    sub = parser.add_subparsers(dest='command')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--scenario', required=True, type=Path, metavar='PATH', help='Scenario TOML file')
    common.add_argument('--out', type=Path, metavar='DIR', help='Artifact directory')
    common.add_argument('--threads', type=int, metavar='INT', help='Threads of the numerical libraries')
    common.add_argument('--log-level', dest='log_level', metavar='LEVEL', help='Logging level')
    mode = common.add_mutually_exclusive_group()
    mode.add_argument('--steady', dest='mode', action='store_const', const='steady', help='Steady simulation')
    mode.add_argument('--transient', dest='mode', action='store_const', const='transient',
                      help='Transient simulation')

    # validate
    sub.add_parser('validate', parents=[common], help='Check a scenario file')

    # simulate
    p_sim = sub.add_parser('simulate', parents=[common], help='Forward shallow-water run')
    p_sim.add_argument('--density', type=Path, metavar='FILE', help='Density table (x y d dbar)')

    # optimize
    sub.add_parser('optimize', parents=[common], help='Optimize the turbine density')

    # convert
    p_conv = sub.add_parser('convert', parents=[common], help='Convert a density into turbine positions')
    p_conv.add_argument('--density', type=Path, metavar='FILE', help='Density table (default: <out>/density.txt)')
    p_conv.add_argument('--seed', type=int, metavar='INT', help='Random seed of the conversion')
    p_conv.add_argument('--count', type=int, metavar='INT', help='Turbine count override')

    # taylor-test
    sub.add_parser('taylor-test', parents=[common], help='Verify the adjoint gradient')
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    setup_logging(args.log_level or logging.INFO)
    try:
        _apply_threads(args)
        return COMMANDS[args.command](args)
    except TidalFarmError as e:
        logger.error(f"{args.command} failed: {e}")
        print(_error_line(e.code, str(e)), file=sys.stderr)
        return 2 if e.code.startswith(VALIDATION_PREFIX) else 1
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 1
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(_error_line('tidalfarm.internal', str(e)), file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
