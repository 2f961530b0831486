import hashlib
import logging
import os
import sys

from kstop.errors import ArtifactError, ParameterError


logger = logging.getLogger(__name__)

MODEL_FILE = 'model.bin'
TABLE_FILE = 'table.bin'
FITS_FILE = 'fits.csv'
REPORT_FILE = 'report.csv'

ARTIFACT_FILES = (MODEL_FILE, TABLE_FILE, FITS_FILE, REPORT_FILE)


def parse_synth(text):
    """'N:D[:distribution]' -> (n, d, distribution)"""
    parts = text.split(':')

    try:
        n, d = int(parts[0]), int(parts[1])
    except (ValueError, IndexError):
        raise ParameterError('Synthetic dataset must look like N:D[:distribution], got "{}"'.format(text))

    if len(parts) > 3:
        raise ParameterError('Synthetic dataset must look like N:D[:distribution], got "{}"'.format(text))

    return n, d, parts[2] if len(parts) == 3 else 'uniform'


def resolve_dataset(args):
    from kstop.vectorstore import Metric, load_dataset, synth_dataset

    metric = Metric(args.metric)

    if args.synth is not None:
        n, d, distribution = parse_synth(args.synth)
        return synth_dataset(n, d, args.synth_seed, distribution, metric)

    if args.dataset is None:
        raise ParameterError('Give a dataset with --dataset PATH or --synth N:D')

    return load_dataset(args.dataset, args.format, metric, args.dim)


def load_queries(args, path=None):
    from kstop.vectorstore import read_vecs

    path = path or args.queries
    fmt = args.query_format or args.format

    return read_vecs(path, fmt, args.dim).astype('float32')


def file_digest(path):
    digest = hashlib.sha256()

    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)

    return digest.hexdigest()


def create_stats_writer(config):
    from kstop.console import StatsWriter

    return StatsWriter(sys.stdout, config.bench.colour)


def cmd_synth_data(args, config):
    from kstop.vectorstore import save_vecs, synth_split

    if args.num_eval_queries < 0:
        raise ParameterError('--num-eval-queries must be non-negative, got {}'.format(args.num_eval_queries))

    if (args.num_eval_queries > 0) != (args.out_eval_queries is not None):
        raise ParameterError('--num-eval-queries and --out-eval-queries go together')

    dataset, queries = synth_split(args.n, args.num_queries + args.num_eval_queries, args.dim, args.seed,
                                   args.distribution)
    save_vecs(args.out_base, dataset.vectors, 'fvecs')
    save_vecs(args.out_queries, queries[:args.num_queries], 'fvecs')

    rows = [
        ('base vectors', len(dataset)),
        ('queries', args.num_queries),
        ('dimension', dataset.dim),
        ('distribution', args.distribution),
        ('base file', args.out_base),
        ('query file', args.out_queries),
    ]

    if args.num_eval_queries > 0:
        save_vecs(args.out_eval_queries, queries[args.num_queries:], 'fvecs')
        rows.extend([('evaluation queries', args.num_eval_queries), ('evaluation file', args.out_eval_queries)])

    create_stats_writer(config).block('Synthetic data', rows)


def cmd_build(args, config):
    from kstop.graph_index import GraphIndex

    dataset = resolve_dataset(args)
    index = GraphIndex.build(dataset, config.graph.graph_config)
    index.save(args.out)

    rows = list(index.stats().items())
    rows.extend(('param.graph.{}'.format(key), value) for key, value in config.graph.describe().items())
    rows.append(('sha256', file_digest(args.out)))

    create_stats_writer(config).block('Built {}'.format(args.out), rows)


def cmd_ground_truth(args, config):
    from kstop.vectorstore import compute_ground_truth

    dataset = resolve_dataset(args)
    queries = load_queries(args)
    ground_truth = compute_ground_truth(dataset, queries, args.k, config.bench.workers)
    ground_truth.save(args.out)

    create_stats_writer(config).block('Ground truth', [
        ('queries', len(ground_truth)),
        ('depth', ground_truth.depth),
        ('ids', args.out + '.ivecs'),
        ('distances', args.out + '.fvecs'),
    ])


def cmd_preprocess(args, config):
    from kstop.graph_index import GraphIndex
    from kstop.preprocess import run_pipeline

    dataset = resolve_dataset(args)
    index = GraphIndex.load(args.index, dataset)
    queries = load_queries(args)

    result = run_pipeline(dataset, queries, config.pipeline.pipeline_config, index.config,
                          config.train.train_config, index)

    os.makedirs(args.out, exist_ok=True)
    result.model.save(os.path.join(args.out, MODEL_FILE))
    result.table.save(os.path.join(args.out, TABLE_FILE))
    result.fits.save(os.path.join(args.out, FITS_FILE))
    result.report.save(os.path.join(args.out, REPORT_FILE))

    create_stats_writer(config).block('Preprocessed into {}'.format(args.out), result.report.rows)


def load_artifacts(directory):
    from kstop.gbdt import GbdtModel
    from kstop.preprocess import PipelineReport
    from kstop.prob_table import DecayFits, ProbTable

    missing = [name for name in ARTIFACT_FILES if not os.path.exists(os.path.join(directory, name))]

    if missing:
        raise ArtifactError('{} is missing {}'.format(directory, ', '.join(missing)))

    model = GbdtModel.load(os.path.join(directory, MODEL_FILE))
    table = ProbTable.load(os.path.join(directory, TABLE_FILE))
    fits = DecayFits.load(os.path.join(directory, FITS_FILE), table)
    report = PipelineReport.load(os.path.join(directory, REPORT_FILE))

    return model, table, fits, report


def cmd_synth_trace(args, config):
    from kstop.trace import parse_weights, synth_trace

    trace = synth_trace(args.entries, args.num_queries, parse_weights(args.weights), args.seed)
    trace.save(args.out)

    create_stats_writer(config).block('Synthetic trace', [
        ('entries', len(trace)),
        ('max K', trace.max_k),
        ('weights', args.weights),
        ('out', args.out),
    ])


def cmd_run(args, config):
    from kstop.graph_index import GraphIndex
    from kstop.replay import Replayer
    from kstop.trace import QueryTrace
    from kstop.vectorstore import GroundTruth

    dataset = resolve_dataset(args)
    index = GraphIndex.load(args.index, dataset)
    trace = QueryTrace.load(args.trace)
    queries = load_queries(args) if args.queries is not None else None
    ground_truth = GroundTruth.load(args.ground_truth) if args.ground_truth is not None else None

    model = table = fits = None
    preprocessing_seconds = None

    if args.method != 'fixed':
        if args.artifacts is None and not args.oracle:
            raise ParameterError('Method {} needs --artifacts DIR'.format(args.method))

        if args.artifacts is not None:
            model, table, fits, pipeline_report = load_artifacts(args.artifacts)
            preprocessing_seconds = pipeline_report.get('total_seconds')

    if args.oracle and args.method == 'stop-opt' and table is None:
        raise ParameterError('stop-opt with --oracle still needs --artifacts for its probability table')

    params = dict(('search.{}'.format(k), v) for k, v in config.search.describe().items())
    params.update(('bench.{}'.format(k), v) for k, v in config.bench.describe().items())
    params.update(('graph.{}'.format(k), v) for k, v in index.config.describe().items())
    params['oracle'] = args.oracle

    workers = args.workers or config.bench.workers
    replayer = Replayer(index, args.method, model, table, fits, config.search.params, config.bench.ef_factor,
                        args.oracle)
    report = replayer.replay(trace, queries, ground_truth, workers, params)

    if preprocessing_seconds is not None:
        report.extras['preprocessing_seconds'] = preprocessing_seconds

    report.save(args.out)

    summary = [row for row in report.aggregates() if not row[0].startswith('param.')]
    create_stats_writer(config).block('Run {} -> {}'.format(args.method, args.out), summary)


def cmd_compare(args, config):
    from kstop.report import RunReport, compare, save_comparison

    named = [(path, RunReport.load(path)) for path in args.reports]
    rows = compare(named)
    save_comparison(rows, args.out)

    writer = create_stats_writer(config)

    for row in rows:
        writer.block(row['report'], [(key, value) for key, value in row.items() if key != 'report'])
