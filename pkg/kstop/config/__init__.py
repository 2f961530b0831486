import os
import logging
from kstop.config.config_reader import ConfigReader, apply_overrides
from kstop.config.sections import BenchSection, GraphSection, PipelineSection, SearchSection, TrainSection
from kstop.errors import ConfigError


class Config:
    def __init__(self, paths, overrides=()):
        self.paths = paths
        self.overrides = list(overrides)

        self.config_classes = {
            'graph': GraphSection,
            'train': TrainSection,
            'pipeline': PipelineSection,
            'search': SearchSection,
            'bench': BenchSection,
        }

        self.config = {}
        self.logger = logging.getLogger(self.__class__.__name__)

    def load(self):
        config = {}

        for path in self.paths:
            if path is None:
                continue

            path = os.path.abspath(os.path.expanduser(path))

            self.logger.info('Attempting to load config file: %s', path)

            try:
                with open(path) as f:
                    reader = ConfigReader(f, config, path)
                    config = reader.read_config()
            except FileNotFoundError:
                self.logger.info('Config file not found: %s', path)

        apply_overrides(config, self.overrides)

        for key in config:
            if key not in self.config_classes:
                raise ConfigError('Unknown config section: [{}]'.format(key))

        for key, config_class in self.config_classes.items():
            if key in config:
                self.logger.debug('Loading config for %s', key)
                self.config[key] = config_class(config[key])
            else:
                self.logger.debug('Loading default config for %s', key)
                self.config[key] = config_class()

        return self

    def describe(self):
        """Effective settings flattened to `section.key` names."""
        values = {}

        for section, settings in self.config.items():
            for key, value in settings.describe().items():
                values['{}.{}'.format(section, key)] = value

        return values

    def __getattr__(self, name):
        if name == 'config':
            raise AttributeError(name)

        try:
            return self.config[name]
        except KeyError:
            raise AttributeError(name)
