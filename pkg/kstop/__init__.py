# PYTHON_ARGCOMPLETE_OK
import sys
import argparse


VERSION = '0.2.0'

RC_FILE = '~/.kstoprc'
CONFIG_ENV = 'KSTOP_CONFIG'


def load_config(args):
    from kstop.config import Config
    import os

    config = Config([RC_FILE, os.environ.get(CONFIG_ENV), getattr(args, 'config', None)],
                    getattr(args, 'overrides', None) or [])

    return config.load()


def add_config_arguments(parser):
    parser.add_argument('--config', metavar='FILE', help='Config file layered over ~/.kstoprc and $KSTOP_CONFIG')
    parser.add_argument('--set', action='append', dest='overrides', metavar='SECTION.KEY=VALUE',
                        help='Override one config setting (repeatable)')


def add_dataset_arguments(parser):
    from kstop.vectorstore import FORMATS, Metric

    parser.add_argument('--dataset', metavar='PATH', help='Base vector file')
    parser.add_argument('--synth', metavar='N:D[:DIST]', help='Generate the base vectors instead of reading them')
    parser.add_argument('--synth-seed', dest='synth_seed', type=int, default=0, help='Seed for --synth (default 0)')
    parser.add_argument('--format', choices=sorted(FORMATS), default='fvecs', help='Vector file format')
    parser.add_argument('--query-format', dest='query_format', choices=sorted(FORMATS),
                        help='Query file format (defaults to --format)')
    parser.add_argument('--dim', type=int, help='Dimension, required for raw-f32 files')
    parser.add_argument('--metric', choices=Metric.KINDS, default=Metric.SQUARED_EUCLIDEAN)


def build_parser():
    from kstop.replay import METHODS
    from kstop.vectorstore import DISTRIBUTIONS
    import kstop.commands as commands

    parser = argparse.ArgumentParser(prog='kstop', description='Learned early termination for top-K graph search')
    parser.add_argument('-v', '--verbose', action='count', default=0, dest='verbosity')
    parser.add_argument('-V', '--version', action='store_true', dest='version', help='Show version and exit')

    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')

    synth = subparsers.add_parser('synth-data', help='Write synthetic base and query vectors')
    add_config_arguments(synth)
    synth.add_argument('--n', type=int, required=True, help='Number of base vectors')
    synth.add_argument('--num-queries', dest='num_queries', type=int, required=True)
    synth.add_argument('--dim', type=int, required=True)
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--distribution', choices=DISTRIBUTIONS, default='uniform')
    synth.add_argument('--out-base', dest='out_base', required=True, metavar='PATH')
    synth.add_argument('--out-queries', dest='out_queries', required=True, metavar='PATH')
    synth.add_argument('--num-eval-queries', dest='num_eval_queries', type=int, default=0,
                       help='Extra held-out queries from the same generator')
    synth.add_argument('--out-eval-queries', dest='out_eval_queries', metavar='PATH')
    synth.set_defaults(handler=commands.cmd_synth_data)

    build = subparsers.add_parser('build', help='Build and save a graph index')
    add_config_arguments(build)
    add_dataset_arguments(build)
    build.add_argument('--out', required=True, metavar='PATH')
    build.set_defaults(handler=commands.cmd_build)

    truth = subparsers.add_parser('ground-truth', help='Exact top-K ids and distances for a query file')
    add_config_arguments(truth)
    add_dataset_arguments(truth)
    truth.add_argument('--queries', required=True, metavar='PATH')
    truth.add_argument('-k', '--k', type=int, required=True, help='Ground-truth depth')
    truth.add_argument('--out', required=True, metavar='PREFIX', help='Writes PREFIX.ivecs and PREFIX.fvecs')
    truth.set_defaults(handler=commands.cmd_ground_truth)

    preprocess = subparsers.add_parser('preprocess', help='Train the stop model and profile the probability table')
    add_config_arguments(preprocess)
    add_dataset_arguments(preprocess)
    preprocess.add_argument('--index', required=True, metavar='PATH')
    preprocess.add_argument('--queries', required=True, metavar='PATH', help='Training queries')
    preprocess.add_argument('--out', required=True, metavar='DIR')
    preprocess.set_defaults(handler=commands.cmd_preprocess)

    trace = subparsers.add_parser('synth-trace', help='Write a synthetic multi-K query trace')
    add_config_arguments(trace)
    trace.add_argument('--entries', type=int, required=True)
    trace.add_argument('--num-queries', dest='num_queries', type=int, required=True,
                       help='Query ids are drawn from [0, N)')
    trace.add_argument('--weights', default='1:0.25,10:0.25,50:0.25,100:0.25', metavar='K:W,...')
    trace.add_argument('--seed', type=int, default=0)
    trace.add_argument('--out', required=True, metavar='PATH')
    trace.set_defaults(handler=commands.cmd_synth_trace)

    run = subparsers.add_parser('run', help='Replay a trace and write per-query and summary CSVs')
    add_config_arguments(run)
    add_dataset_arguments(run)
    run.add_argument('--index', required=True, metavar='PATH')
    run.add_argument('--trace', required=True, metavar='PATH')
    run.add_argument('--queries', metavar='PATH', help='Query vectors referenced by the trace ids')
    run.add_argument('--ground-truth', dest='ground_truth', metavar='PREFIX')
    run.add_argument('--artifacts', metavar='DIR', help='Output directory of preprocess')
    run.add_argument('--method', choices=METHODS, required=True)
    run.add_argument('--oracle', action='store_true', help='Stop on ground truth instead of the model')
    run.add_argument('--workers', type=int, help='Replay threads (defaults to [bench] workers)')
    run.add_argument('--out', required=True, metavar='PATH')
    run.set_defaults(handler=commands.cmd_run)

    compare = subparsers.add_parser('compare', help='Compare run reports against the first one')
    add_config_arguments(compare)
    compare.add_argument('reports', nargs='+', metavar='REPORT')
    compare.add_argument('--out', required=True, metavar='PATH')
    compare.set_defaults(handler=commands.cmd_compare)

    return parser


def main(argv=None):
    parser = build_parser()

    try:
        import argcomplete
        argcomplete.autocomplete(parser)
    except Exception:
        pass # Optional argcomplete module not installed

    args = parser.parse_args(argv)

    if args.version:
        print('kstop {}'.format(VERSION))
        sys.exit(0)

    import logging

    if args.verbosity != 0:
        logging_level = 10 * max(0, 3 - args.verbosity)

        logging.basicConfig(level=logging_level)

    if args.command is None:
        parser.print_help()
        sys.exit(1)

    from kstop.errors import KstopError

    try:
        config = load_config(args)
        args.handler(args, config)
    except (KstopError, OSError) as e:
        sys.stderr.write('kstop: error: {}\n'.format(e))
        sys.exit(1)


if __name__ == '__main__':
    main()
