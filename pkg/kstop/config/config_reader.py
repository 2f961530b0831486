import re
from kstop.errors import ConfigError


class ConfigReader:
    def __init__(self, conf_file, config=None, source='<config>'):
        self.conf_file = conf_file
        self.source = source
        self.comment_regex = re.compile(r'^([^#]*)#?')
        self.group_header_regex = re.compile(r'^\[([a-z_]+)\]$')
        self.entry_regex = re.compile(r'^[ \t]*([a-z0-9_]+)[ \t]*=(.*)$')
        self.config = config if config is not None else {}
        self.line_number = 0

    def read_line(self):
        while True:
            line = self.conf_file.readline()
            self.line_number += 1

            if line == '':
                return None

            line = self.comment_regex.search(line).group(1).strip()

            if line != '':
                return line

    def read_config(self):
        line = self.read_line()
        current_group = None

        while line is not None:
            entry_match = self.entry_regex.search(line)

            if entry_match is not None:
                if current_group is None:
                    raise ConfigError('{}:{}: setting outside of a section: "{}"'.format(
                        self.source, self.line_number, line))

                current_group[entry_match.group(1)] = entry_match.group(2).strip()

                line = self.read_line()
                continue

            group_header_match = self.group_header_regex.search(line)

            if group_header_match is not None:
                current_group = self.config.setdefault(group_header_match.group(1), {})

                line = self.read_line()
                continue

            raise ConfigError('{}:{}: unparsable line in config: "{}"'.format(
                self.source, self.line_number, line))

        return self.config


def apply_overrides(config, overrides):
    """Merge `section.key=value` strings into a raw config dict."""
    override_regex = re.compile(r'^([a-z_]+)\.([a-z0-9_]+)[ \t]*=(.*)$')

    for override in overrides:
        match = override_regex.search(override.strip())

        if match is None:
            raise ConfigError('Override must look like section.key=value: "{}"'.format(override))

        config.setdefault(match.group(1), {})[match.group(2)] = match.group(3).strip()

    return config


def _take(config, key):
    val = config[key]
    del config[key]
    return val


def parse_boolean(config, key, default=False):
    if key not in config:
        return default

    val = _take(config, key)

    if val.lower() in ('true', 'yes', 'on', '1'):
        return True
    elif val.lower() in ('false', 'no', 'off', '0'):
        return False
    else:
        raise ConfigError('Failed to parse boolean expression for {}: {}'.format(key, val))


def parse_int(config, key, default=0, minimum=None):
    if key not in config:
        return default

    val = _take(config, key)

    try:
        result = int(val)
    except ValueError:
        raise ConfigError('Failed to parse integer for {}: {}'.format(key, val))

    if minimum is not None and result < minimum:
        raise ConfigError('{} must be at least {}, got {}'.format(key, minimum, result))

    return result


def parse_optional_int(config, key, default=None, minimum=None):
    if key in config and config[key].lower() in ('', 'none'):
        del config[key]
        return None

    return parse_int(config, key, default, minimum)


def parse_float(config, key, default=0.0, low=None, high=None):
    if key not in config:
        return default

    val = _take(config, key)

    try:
        result = float(val)
    except ValueError:
        raise ConfigError('Failed to parse number for {}: {}'.format(key, val))

    if (low is not None and result < low) or (high is not None and result > high):
        raise ConfigError('{} must lie in [{}, {}], got {}'.format(key, low, high, result))

    return result


def parse_choice(config, key, choices, default):
    if key not in config:
        return default

    val = _take(config, key).lower()

    if val not in choices:
        raise ConfigError('{} must be one of {}, got {}'.format(key, ', '.join(choices), val))

    return val
