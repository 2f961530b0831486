import pytest

from kstop.gbdt import TrainConfig
from kstop.graph_index import GraphConfig, GraphIndex
from kstop.preprocess import PipelineConfig, run_pipeline
from kstop.vectorstore import synth_split


TRAINING_QUERIES = 60


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='Run acceptance-scale tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: acceptance-scale test, only run with --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return

    skip_slow = pytest.mark.skip(reason='needs --runslow')

    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope='session')
def split():
    return synth_split(600, 120, 8, seed=3)


@pytest.fixture(scope='session')
def dataset(split):
    return split[0]


@pytest.fixture(scope='session')
def queries(split):
    return split[1]


@pytest.fixture(scope='session')
def graph_config():
    return GraphConfig(m=8, ef_construction=40, seed=1)


@pytest.fixture(scope='session')
def index(dataset, graph_config):
    return GraphIndex.build(dataset, graph_config)


@pytest.fixture(scope='session')
def pipeline_config():
    return PipelineConfig(num_training_queries=TRAINING_QUERIES, checkpoint_interval=5, replay_factor=2,
                          table_n_max=20, table_r_max=20)


@pytest.fixture(scope='session')
def train_config():
    return TrainConfig(max_rounds=20, min_samples_per_leaf=5)


@pytest.fixture(scope='session')
def artifacts(dataset, queries, index, pipeline_config, train_config):
    return run_pipeline(dataset, queries[:TRAINING_QUERIES], pipeline_config, train_config=train_config, index=index)


@pytest.fixture(scope='session')
def test_queries(queries):
    return queries[TRAINING_QUERIES:]
