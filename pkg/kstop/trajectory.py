import numpy as np

from kstop.errors import ParameterError


# Frozen model contract: model files depend on this order.
FEATURE_NAMES = (
    'window_mean',
    'window_variance',
    'window_min',
    'window_max',
    'window_median',
    'window_p25',
    'window_p75',
    'curr_hops',
    'curr_cmps',
    'dist_1st',
    'dist_start',
)

NUM_FEATURES = len(FEATURE_NAMES)

DEFAULT_WINDOW = 100


class Trajectory:
    """Append-only record of every distance evaluated by a search, in order."""

    def __init__(self):
        self._values = []

    def __len__(self):
        return len(self._values)

    def extend(self, distances):
        self._values.extend(distances)

    def window(self, w):
        return np.asarray(self._values[-w:], dtype=np.float64)


def check_window(w):
    if w < 1:
        raise ParameterError('Window size must be at least 1, got {}'.format(w))


def window_statistics(window):
    p25, median, p75 = np.percentile(window, [25, 50, 75])

    return (
        float(np.mean(window)),
        float(np.var(window)),
        float(np.min(window)),
        float(np.max(window)),
        float(median),
        float(p25),
        float(p75),
    )


def extract_features(trajectory, state, masked=None, w=DEFAULT_WINDOW):
    check_window(w)

    if len(trajectory) == 0:
        raise ParameterError('Cannot extract features from an empty trajectory')

    if masked is None:
        masked = state.masked

    best = state.best(masked)
    dist_1st = best[0] if best is not None else state.dist_start

    features = np.empty(NUM_FEATURES, dtype=np.float64)
    features[:7] = window_statistics(trajectory.window(w))
    features[7] = state.hops
    features[8] = state.cmps
    features[9] = dist_1st
    features[10] = state.dist_start

    return features


def mask_features(state, n):
    """Mask ranks 1..n of the search set; the trajectory itself is untouched."""
    if n < 0 or n > len(state.search_set):
        raise ParameterError('Cannot mask {} entries of a search set holding {}'.format(n, len(state.search_set)))

    state.masked = set(node for _, node in state.search_set[:n])

    return state.masked


def features_as_dict(features):
    return dict(zip(FEATURE_NAMES, (float(value) for value in features)))
