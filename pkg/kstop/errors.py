class KstopError(Exception):
    pass


class FormatError(KstopError):
    pass


class DimensionMismatch(KstopError):
    pass


class ParameterError(KstopError, ValueError):
    pass


class ArtifactError(KstopError):
    pass


class ConfigError(KstopError):
    pass


class TraceError(KstopError):
    pass
