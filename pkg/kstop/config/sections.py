from kstop.config import config_reader
from kstop.errors import ConfigError, ParameterError
from kstop.gbdt import GROWTH_MODES, TrainConfig
from kstop.graph_index import GraphConfig
from kstop.preprocess import PipelineConfig
from kstop.search import SearchParams


def _check_empty(config, section):
    for key in config:
        raise ConfigError('Unknown setting in {} section: {}'.format(section, key))


def _build(section, factory, values):
    try:
        return factory(**values)
    except ParameterError as e:
        raise ConfigError('Invalid {} settings: {}'.format(section, e))


class GraphSection:
    def __init__(self, config=None):
        config = dict(config or {})

        self.m = config_reader.parse_int(config, 'm', 16, minimum=2)
        self.ef_construction = config_reader.parse_int(config, 'ef_construction', 200, minimum=1)
        self.seed = config_reader.parse_int(config, 'seed', 0, minimum=0)

        _check_empty(config, 'graph')

        self.graph_config = _build('graph', GraphConfig, self.describe())

    def describe(self):
        return {'m': self.m, 'ef_construction': self.ef_construction, 'seed': self.seed}


class TrainSection:
    def __init__(self, config=None):
        config = dict(config or {})
        defaults = TrainConfig()

        self.max_rounds = config_reader.parse_int(config, 'max_rounds', defaults.max_rounds, minimum=0)
        self.max_leaves = config_reader.parse_int(config, 'max_leaves', defaults.max_leaves, minimum=2)
        self.max_depth = config_reader.parse_int(config, 'max_depth', defaults.max_depth, minimum=1)
        self.growth = config_reader.parse_choice(config, 'growth', GROWTH_MODES, defaults.growth)
        self.min_samples_per_leaf = config_reader.parse_int(config, 'min_samples_per_leaf',
                                                            defaults.min_samples_per_leaf, minimum=1)
        self.learning_rate = config_reader.parse_float(config, 'learning_rate', defaults.learning_rate, 0.0, 1.0)
        self.reg_lambda = config_reader.parse_float(config, 'reg_lambda', defaults.reg_lambda, low=0.0)
        self.validation_fraction = config_reader.parse_float(config, 'validation_fraction',
                                                             defaults.validation_fraction, 0.0, 1.0)
        self.early_stop_patience = config_reader.parse_int(config, 'early_stop_patience',
                                                           defaults.early_stop_patience, minimum=1)
        self.early_stop_tolerance = config_reader.parse_float(config, 'early_stop_tolerance',
                                                              defaults.early_stop_tolerance, low=0.0)
        self.seed = config_reader.parse_int(config, 'seed', defaults.seed, minimum=0)

        _check_empty(config, 'train')

        self.train_config = _build('train', TrainConfig, self.describe())

    def describe(self):
        return {
            'max_rounds': self.max_rounds,
            'max_leaves': self.max_leaves,
            'max_depth': self.max_depth,
            'growth': self.growth,
            'min_samples_per_leaf': self.min_samples_per_leaf,
            'learning_rate': self.learning_rate,
            'reg_lambda': self.reg_lambda,
            'validation_fraction': self.validation_fraction,
            'early_stop_patience': self.early_stop_patience,
            'early_stop_tolerance': self.early_stop_tolerance,
            'seed': self.seed,
        }


class PipelineSection:
    def __init__(self, config=None):
        config = dict(config or {})
        defaults = PipelineConfig()

        self.num_training_queries = config_reader.parse_int(config, 'num_training_queries',
                                                            defaults.num_training_queries, minimum=1)
        self.checkpoint_interval = config_reader.parse_int(config, 'checkpoint_interval',
                                                           defaults.checkpoint_interval, minimum=1)
        self.replay_factor = config_reader.parse_int(config, 'replay_factor', defaults.replay_factor, minimum=1)
        self.table_n_max = config_reader.parse_int(config, 'table_n_max', defaults.table_n_max, minimum=0)
        self.table_r_max = config_reader.parse_int(config, 'table_r_max', defaults.table_r_max, minimum=1)
        self.table_queries = config_reader.parse_optional_int(config, 'table_queries', None, minimum=1)
        self.table_step_cap = config_reader.parse_optional_int(config, 'table_step_cap', None, minimum=0)
        self.window = config_reader.parse_int(config, 'window', defaults.window, minimum=1)
        self.workers = config_reader.parse_int(config, 'workers', defaults.workers, minimum=1)
        self.seed = config_reader.parse_int(config, 'seed', defaults.seed, minimum=0)

        _check_empty(config, 'pipeline')

        self.pipeline_config = _build('pipeline', PipelineConfig, self.describe())

    def describe(self):
        return {
            'num_training_queries': self.num_training_queries,
            'checkpoint_interval': self.checkpoint_interval,
            'replay_factor': self.replay_factor,
            'table_n_max': self.table_n_max,
            'table_r_max': self.table_r_max,
            'table_queries': self.table_queries,
            'table_step_cap': self.table_step_cap,
            'window': self.window,
            'workers': self.workers,
            'seed': self.seed,
        }


class SearchSection:
    def __init__(self, config=None):
        config = dict(config or {})
        defaults = SearchParams()

        self.recall_target = config_reader.parse_float(config, 'recall_target', defaults.recall_target, 0.0, 1.0)
        self.alpha = config_reader.parse_float(config, 'alpha', defaults.alpha, 0.0, 1.0)
        self.window = config_reader.parse_int(config, 'window', defaults.window, minimum=1)
        self.base_interval = config_reader.parse_int(config, 'base_interval', defaults.base_interval, minimum=1)
        self.adaptive_frequency = config_reader.parse_boolean(config, 'adaptive_frequency',
                                                              defaults.adaptive_frequency)
        self.forecast = config_reader.parse_boolean(config, 'forecast', defaults.forecast)
        self.step_cap = config_reader.parse_optional_int(config, 'step_cap', defaults.step_cap, minimum=0)

        _check_empty(config, 'search')

        self.params = _build('search', SearchParams, self.describe())

    def describe(self):
        return {
            'recall_target': self.recall_target,
            'alpha': self.alpha,
            'window': self.window,
            'base_interval': self.base_interval,
            'adaptive_frequency': self.adaptive_frequency,
            'forecast': self.forecast,
            'step_cap': self.step_cap,
        }


class BenchSection:
    def __init__(self, config=None):
        config = dict(config or {})

        # Fixed baseline budget: ef = ceil(ef_factor * K).
        self.ef_factor = config_reader.parse_float(config, 'ef_factor', 4.0, low=1.0)
        self.workers = config_reader.parse_int(config, 'workers', 1, minimum=1)
        self.colour = config_reader.parse_boolean(config, 'colour', True)

        _check_empty(config, 'bench')

    def describe(self):
        return {'ef_factor': self.ef_factor, 'workers': self.workers, 'colour': self.colour}
