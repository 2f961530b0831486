import numpy as np
import pytest

from kstop import gbdt
from kstop.graph_index import GraphConfig, GraphIndex, fixed_search
from kstop.preprocess import PipelineConfig, generate_training_records, run_pipeline
from kstop.replay import fixed_ef
from kstop.search import OracleStop, SearchParams, basic_search, optimized_search
from kstop.vectorstore import compute_ground_truth, recall_at_k, synth_split


pytestmark = pytest.mark.slow

TRAINING_QUERIES = 4000
EVALUATION_QUERIES = 300
TRACE_KS = (1, 10, 50, 100)


class Bench:
    """Default-settings artifacts on a 10k clustered dataset, shared by every check below."""

    def __init__(self):
        self.dataset, queries = synth_split(10000, TRAINING_QUERIES + EVALUATION_QUERIES, 32, seed=11,
                                            distribution='gaussian-clusters')
        self.training = queries[:TRAINING_QUERIES]
        self.queries = queries[TRAINING_QUERIES:]
        self.index = GraphIndex.build(self.dataset, GraphConfig(seed=2))
        self.result = run_pipeline(self.dataset, self.training, PipelineConfig(), index=self.index)
        self.truth = compute_ground_truth(self.dataset, self.queries, 200)

    def trace(self, ks=TRACE_KS, count=EVALUATION_QUERIES):
        return [(query_id, ks[query_id % len(ks)]) for query_id in range(count)]

    def measure(self, search, trace):
        recalls, cmps, invocations = [], [], []

        for query_id, k in trace:
            outcome = search(self.queries[query_id], k)
            recalls.append(recall_at_k(self.truth.ids[query_id], outcome.ids, k))
            cmps.append(outcome.cmps)
            invocations.append(getattr(outcome, 'model_invocations', 0))

        return np.array(recalls), np.mean(cmps), np.mean(invocations)

    def optimized(self, params=None, model=None):
        model = model or self.result.model

        def search(query, k):
            return optimized_search(self.index, model, self.result.table, self.result.fits, query, k, params)

        return search

    def basic(self, params=None):
        def search(query, k):
            return basic_search(self.index, self.result.model, query, k, params)

        return search

    def fixed(self, ef_factor):
        def search(query, k):
            return fixed_search(self.index, query, k, fixed_ef(k, ef_factor, len(self.index)))

        return search


@pytest.fixture(scope='module')
def bench():
    return Bench()


def test_training_records_hold_both_labels(bench):
    assert 0.05 < bench.result.records.positive_rate < 0.95


def test_oracle_recall_at_scale(bench):
    recalls = []

    for query, ids in zip(bench.queries[:100], bench.truth.ids):
        outcome = basic_search(bench.index, OracleStop(ids[:10]), query, 10)
        recalls.append(recall_at_k(ids, outcome.ids, 10))

    assert np.mean(recalls) >= 0.99


def test_recall_target_attainment(bench):
    recalls, _, _ = bench.measure(bench.optimized(), bench.trace())

    assert recalls.mean() >= 0.945
    assert np.mean(recalls >= 0.95) >= 0.75


def test_cheaper_than_fixed_at_matched_recall(bench):
    trace = bench.trace()
    recalls, cmps, _ = bench.measure(bench.optimized(), trace)

    for ef_factor in (1, 1.5, 2, 3, 4, 6, 8, 12, 16, 24, 32):
        fixed_recalls, fixed_cmps, _ = bench.measure(bench.fixed(ef_factor), trace)

        if fixed_recalls.mean() >= recalls.mean():
            break
    else:
        pytest.fail('No fixed budget matched the learned recall of {:.4f}'.format(recalls.mean()))

    assert cmps <= 0.9 * fixed_cmps


def test_forecast_saves_model_calls(bench):
    trace = bench.trace(ks=(100,), count=100)

    basic_recalls, _, basic_invocations = bench.measure(bench.basic(), trace)
    recalls, _, invocations = bench.measure(bench.optimized(), trace)

    assert invocations <= 0.8 * basic_invocations
    assert abs(recalls.mean() - basic_recalls.mean()) <= 0.01


def test_adaptive_frequency_does_not_cost_more(bench):
    trace = bench.trace()

    recalls, cmps, invocations = bench.measure(bench.optimized(), trace)
    fixed_recalls, fixed_cmps, fixed_invocations = bench.measure(
        bench.optimized(SearchParams(adaptive_frequency=False)), trace)

    assert cmps + invocations <= fixed_cmps + fixed_invocations
    assert abs(recalls.mean() - fixed_recalls.mean()) <= 0.005


@pytest.mark.parametrize('k', [1, 5, 10, 20, 50, 100, 200])
def test_top1_model_generalizes_across_k(bench, k):
    recalls, _, _ = bench.measure(bench.optimized(), bench.trace(ks=(k,), count=100))

    assert recalls.mean() >= 0.94


def test_window_sweep(bench):
    training = bench.training[:1000]
    truth = compute_ground_truth(bench.dataset, training, 1)
    trace = bench.trace(ks=(10,), count=100)
    recalls, costs = [], []

    for window in (50, 100, 200, 400):
        records = generate_training_records(bench.index, training, truth, PipelineConfig(window=window))
        model = gbdt.train(records.features, records.labels)

        window_recalls, cmps, _ = bench.measure(bench.optimized(SearchParams(window=window), model), trace)
        recalls.append(window_recalls.mean())
        costs.append(cmps)

    assert max(recalls) - min(recalls) <= 0.01
    assert max(costs) <= 1.1 * min(costs)
