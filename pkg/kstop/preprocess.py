import csv
import logging
import math
import time
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from kstop import gbdt
from kstop.errors import ArtifactError, ParameterError
from kstop.graph_index import GraphIndex, init_search, search_one_step
from kstop.prob_table import DEFAULT_SIZE, DecayFits, ProbTable
from kstop.trajectory import DEFAULT_WINDOW, NUM_FEATURES, check_window, extract_features
from kstop.vectorstore import compute_ground_truth


logger = logging.getLogger(__name__)


class PipelineConfig:
    def __init__(self, num_training_queries=4000, checkpoint_interval=50, replay_factor=4,
                 table_n_max=DEFAULT_SIZE, table_r_max=DEFAULT_SIZE, table_queries=None,
                 table_step_cap=None, window=DEFAULT_WINDOW, workers=1, seed=0):
        if num_training_queries < 1:
            raise ParameterError('num_training_queries must be at least 1, got {}'.format(num_training_queries))

        if checkpoint_interval < 1 or replay_factor < 1 or workers < 1:
            raise ParameterError('checkpoint_interval, replay_factor and workers must be positive')

        check_window(window)

        self.num_training_queries = num_training_queries
        self.checkpoint_interval = checkpoint_interval
        self.replay_factor = replay_factor
        self.table_n_max = table_n_max
        self.table_r_max = table_r_max
        self.table_queries = table_queries
        self.table_step_cap = table_step_cap
        self.window = window
        self.workers = workers
        self.seed = seed

    def describe(self):
        return dict(vars(self))


TrainingRecord = namedtuple('TrainingRecord', 'features label query_id')


class TrainingSet:
    def __init__(self, features, labels, query_ids):
        self.features = np.asarray(features, dtype=np.float64).reshape(-1, NUM_FEATURES)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.query_ids = np.asarray(query_ids, dtype=np.int64)

    def __len__(self):
        return self.labels.size

    def __iter__(self):
        for features, label, query_id in zip(self.features, self.labels, self.query_ids):
            yield TrainingRecord(features, int(label), int(query_id))

    @property
    def positive_rate(self):
        return float(self.labels.mean()) if len(self) else 0.0


def _map(function, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, items))

    return [function(item) for item in items]


def replay_cap(found_at, config):
    """Last replay step for a query whose top-1 became best at step `found_at`.

    The cap is `replay_factor` times the first checkpoint after the hit, so every
    replay that finds top-1 emits at least one positive snapshot past step 0.
    """
    first_after = math.ceil((found_at + 1) / config.checkpoint_interval) * config.checkpoint_interval

    return config.replay_factor * first_after


def replay_records(index, query, top1, config):
    """Checkpointed top-1 replay of one query: (features list, labels list)."""
    state = init_search(index, query)
    found_at = None
    features = []
    labels = []

    while True:
        best = state.best()
        hit = best is not None and best[1] == top1

        if hit and found_at is None:
            found_at = state.steps_taken

        if state.steps_taken % config.checkpoint_interval == 0:
            features.append(extract_features(state.trajectory, state, (), config.window))
            labels.append(int(hit))

        if state.exhausted:
            break

        if found_at is not None and state.steps_taken >= replay_cap(found_at, config):
            break

        search_one_step(index, state)

    return features, labels


def generate_training_records(index, queries, ground_truth, config=None):
    config = config or PipelineConfig()

    if ground_truth is None or len(ground_truth) < len(queries) or ground_truth.depth < 1:
        raise ParameterError('Every training query needs a ground-truth top-1')

    def replay(query_id):
        return replay_records(index, queries[query_id], int(ground_truth.ids[query_id, 0]), config)

    features = []
    labels = []
    query_ids = []

    for query_id, (query_features, query_labels) in enumerate(_map(replay, range(len(queries)), config.workers)):
        features.extend(query_features)
        labels.extend(query_labels)
        query_ids.extend([query_id] * len(query_labels))

    records = TrainingSet(features, labels, query_ids)
    logger.info('Generated %d training records from %d queries (positive rate %.3f)',
                len(records), len(queries), records.positive_rate)

    return records


def profile_query(index, query, truth_ids, table, step_cap=None):
    """Replay one query step by step, recording (prefix N, ranks present) after every step."""
    rank_of = dict((int(node), rank) for rank, node in enumerate(truth_ids[:table.r_max]))
    present = np.zeros(table.r_max, dtype=bool)
    prefix = 0
    state = init_search(index, query)

    while True:
        for node in state.last_ids:
            rank = rank_of.get(node)

            if rank is not None:
                present[rank] = True

        while prefix < table.r_max and present[prefix]:
            prefix += 1

        table.observe(prefix, present)

        if prefix >= table.r_max or state.exhausted:
            break

        if step_cap is not None and state.steps_taken >= step_cap:
            break

        search_one_step(index, state)


def build_prob_table(index, queries, ground_truth, n_max=DEFAULT_SIZE, r_max=DEFAULT_SIZE, step_cap=None, workers=1):
    if ground_truth.depth < r_max:
        raise ParameterError('Ground truth depth {} is shallower than r_max {}'.format(ground_truth.depth, r_max))

    chunks = [chunk for chunk in np.array_split(np.arange(len(queries)), workers) if chunk.size]

    def profile(chunk):
        partial = ProbTable(n_max, r_max)

        for query_id in chunk:
            profile_query(index, queries[query_id], ground_truth.ids[query_id], partial, step_cap)

        return partial

    table = ProbTable(n_max, r_max)

    for partial in _map(profile, chunks, workers):
        table.merge(partial)

    logger.info('Profiled %d observations over %d queries', int(table.observations.sum()), len(queries))

    return table.finalize()


class PipelineReport:
    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def add(self, metric, value):
        self.rows.append((metric, value))

    def get(self, metric, default=None):
        for key, value in self.rows:
            if key == metric:
                return value

        return default

    def save(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['metric', 'value'])
            writer.writerows(self.rows)

    @classmethod
    def load(cls, path):
        with open(path, newline='') as f:
            reader = csv.reader(f)

            if next(reader, None) != ['metric', 'value']:
                raise ArtifactError('{}: not a pipeline report'.format(path))

            return cls([tuple(row) for row in reader if row])


PipelineResult = namedtuple('PipelineResult', 'index model table fits report ground_truth records')


def run_pipeline(dataset, queries, config=None, graph_config=None, train_config=None, index=None):
    config = config or PipelineConfig()
    train_config = train_config or gbdt.TrainConfig()
    queries = np.asarray(queries)

    if len(queries) == 0:
        raise ParameterError('The pipeline needs at least one training query')

    if len(queries) < config.num_training_queries:
        logger.warning('Only %d training queries available, %d requested', len(queries), config.num_training_queries)

    if len(queries) > config.num_training_queries:
        chosen = np.random.default_rng(config.seed).choice(len(queries), config.num_training_queries, replace=False)
        queries = queries[np.sort(chosen)]

    depth = max(config.table_r_max, 1)

    if depth > len(dataset):
        raise ParameterError('Table depth {} exceeds the dataset size {}'.format(depth, len(dataset)))

    report = PipelineReport()
    timings = {}
    started = time.perf_counter()

    def lap(name, since):
        timings[name] = time.perf_counter() - since
        return time.perf_counter()

    mark = time.perf_counter()

    if index is None:
        index = GraphIndex.build(dataset, graph_config)
        mark = lap('build_seconds', mark)

    ground_truth = compute_ground_truth(dataset, queries, depth, config.workers)
    mark = lap('ground_truth_seconds', mark)

    records = generate_training_records(index, queries, ground_truth, config)
    mark = lap('records_seconds', mark)

    model = gbdt.train(records.features, records.labels, train_config)
    mark = lap('train_seconds', mark)

    table_queries = queries if config.table_queries is None else queries[:config.table_queries]
    table = build_prob_table(index, table_queries, ground_truth, config.table_n_max, config.table_r_max,
                             config.table_step_cap, config.workers)
    mark = lap('table_seconds', mark)

    fits = DecayFits(table).fit_all()
    timings['total_seconds'] = time.perf_counter() - started

    ground_truth_share = timings['ground_truth_seconds'] / max(timings['train_seconds'], 1e-9)
    logger.info('Ground-truth collection took %.1f%% of the training time', 100 * ground_truth_share)

    last_losses = model.history[-1] if model.history else (float('nan'), float('nan'))
    best_losses = model.history[model.best_round - 1] if model.best_round else last_losses

    report.add('training_queries', len(queries))
    report.add('training_records', len(records))
    report.add('positive_rate', records.positive_rate)
    report.add('stopping_round', model.stopping_round)
    report.add('best_round', model.best_round)
    report.add('train_loss', best_losses[0])
    report.add('validation_loss', best_losses[1])
    report.add('table_observations', int(table.observations.sum()))
    report.add('table_monotonicity_deviation', max(table.deviation, 0.0))

    for name, seconds in timings.items():
        report.add(name, seconds)

    report.add('ground_truth_share_of_training', ground_truth_share)

    for name, value in index.config.describe().items():
        report.add('param.graph.{}'.format(name), value)

    for name, value in train_config.describe().items():
        report.add('param.train.{}'.format(name), value)

    for name, value in config.describe().items():
        report.add('param.pipeline.{}'.format(name), value)

    return PipelineResult(index, model, table, fits, report, ground_truth, records)
