import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor

from kstop.errors import ParameterError
from kstop.graph_index import fixed_search
from kstop.report import RunReport, prefix_found
from kstop.search import OracleStop, SearchParams, basic_search, optimized_search
from kstop.vectorstore import brute_force_topk, recall_at_k


logger = logging.getLogger(__name__)

METHODS = ('fixed', 'stop-basic', 'stop-opt')


def fixed_ef(k, ef_factor, n):
    """Search budget of the fixed baseline: larger K gets a larger ef."""
    return min(max(k, math.ceil(ef_factor * k)), max(n, k))


class Replayer:
    def __init__(self, index, method, model=None, table=None, fits=None, params=None, ef_factor=4.0,
                 oracle=False):
        if method not in METHODS:
            raise ParameterError('Unknown method: {} (expected one of {})'.format(method, ', '.join(METHODS)))

        if method != 'fixed' and model is None and not oracle:
            raise ParameterError('Method {} needs a trained stop model'.format(method))

        if method == 'stop-opt' and (params or SearchParams()).forecast and table is None:
            raise ParameterError('Method stop-opt needs a probability table')

        self.index = index
        self.method = method
        self.model = model
        self.table = table
        self.fits = fits
        self.params = params or SearchParams()
        self.ef_factor = ef_factor
        self.oracle = oracle

    def truth_for(self, query, k, query_id, ground_truth):
        if ground_truth is not None and query_id is not None and ground_truth.depth >= k:
            return ground_truth.ids[query_id]

        return brute_force_topk(self.index.dataset, query, k).ids

    def search(self, query, k, truth_ids):
        if self.method == 'fixed':
            started = time.perf_counter()
            result = fixed_search(self.index, query, k, fixed_ef(k, self.ef_factor, len(self.index)))
            return result.ids, result.steps, result.cmps, 0, 0, k, time.perf_counter() - started

        stop = OracleStop(truth_ids[:k]) if self.oracle else self.model

        if self.method == 'stop-basic':
            outcome = basic_search(self.index, stop, query, k, self.params)
        else:
            outcome = optimized_search(self.index, stop, self.table, self.fits, query, k, self.params)

        return (outcome.ids, outcome.steps, outcome.cmps, outcome.model_invocations, outcome.forecast_stop,
                outcome.ranks_decided, outcome.wall_time)

    def replay_entry(self, entry, queries, ground_truth):
        if entry.k > len(self.index):
            raise ParameterError('K = {} exceeds the dataset size {}'.format(entry.k, len(self.index)))

        if entry.vector is not None:
            query, query_id = entry.vector, None
        else:
            query, query_id = queries[entry.query_id], entry.query_id

        truth_ids = self.truth_for(query, entry.k, query_id, ground_truth)
        ids, steps, cmps, invocations, forecast_stop, decided, wall_time = self.search(query, entry.k, truth_ids)
        found = prefix_found(truth_ids, ids, entry.k)

        if self.method != 'fixed' and decided != found:
            logger.info('Query %d (K=%d): %d ranks decided, %d-prefix found', entry.query_id, entry.k, decided, found)

        return {
            'query_id': entry.query_id,
            'K': entry.k,
            'recall': recall_at_k(truth_ids, ids, entry.k),
            'steps': steps,
            'cmps': cmps,
            'model_invocations': invocations,
            'forecast_stop': forecast_stop,
            'ranks_decided': decided,
            'prefix_found': found,
            'wall_time': wall_time,
        }

    def replay(self, trace, queries=None, ground_truth=None, workers=1, params=None):
        if queries is not None:
            trace.check_queries(len(queries))
        elif any(entry.vector is None for entry in trace):
            raise ParameterError('Trace references query ids but no query file was given')

        if ground_truth is not None:
            trace.check_queries(len(ground_truth), 'ground-truth rows')

        def run(entry):
            return self.replay_entry(entry, queries, ground_truth)

        report = RunReport(self.method, params=params)
        started = time.perf_counter()

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(run, trace))
        else:
            rows = [run(entry) for entry in trace]

        for row in rows:
            report.add_row(row)

        report.extras['replay_seconds'] = time.perf_counter() - started
        report.extras['replay_workers'] = workers

        logger.info('Replayed %d queries with %s on %d worker(s) in %.2fs', len(rows), self.method, workers,
                    report.extras['replay_seconds'])

        return report
