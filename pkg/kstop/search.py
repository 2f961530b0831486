import math
import time

import numpy as np

from kstop.errors import ParameterError
from kstop.graph_index import current_topk, init_search, search_multiple_steps, search_one_step
from kstop.prob_table import DecayFits
from kstop.trajectory import DEFAULT_WINDOW, NUM_FEATURES, check_window, extract_features, mask_features


class SearchParams:
    def __init__(self, recall_target=0.95, alpha=0.95, window=DEFAULT_WINDOW, base_interval=50,
                 adaptive_frequency=True, forecast=True, step_cap=None):
        # A zero target is accepted: every rank then stops at its first check.
        if not 0 <= recall_target <= 1:
            raise ParameterError('Recall target must lie in [0, 1], got {}'.format(recall_target))

        if not 0 <= alpha <= 1:
            raise ParameterError('alpha must lie in [0, 1], got {}'.format(alpha))

        if base_interval < 1:
            raise ParameterError('base_interval must be positive, got {}'.format(base_interval))

        if step_cap is not None and step_cap < 0:
            raise ParameterError('step_cap must be non-negative, got {}'.format(step_cap))

        check_window(window)

        self.recall_target = recall_target
        self.alpha = alpha
        self.window = window
        self.base_interval = base_interval
        self.adaptive_frequency = adaptive_frequency
        self.forecast = forecast
        self.step_cap = step_cap

    def replace(self, **changes):
        values = self.describe()
        values.update(changes)
        return SearchParams(**values)

    def describe(self):
        return dict(vars(self))


class SearchOutcome:
    def __init__(self, ids, steps, cmps, model_invocations=0, forecast_stop=0, wall_time=0.0, ranks_decided=0):
        self.ids = ids
        self.steps = steps
        self.cmps = cmps
        self.model_invocations = model_invocations
        self.forecast_stop = forecast_stop
        self.wall_time = wall_time
        self.ranks_decided = ranks_decided

    def metrics(self):
        return {
            'steps': self.steps,
            'cmps': self.cmps,
            'model_invocations': self.model_invocations,
            'forecast_stop': self.forecast_stop,
            'wall_time': self.wall_time,
        }


class LearnedStop:
    """Probability that the best unmasked candidate is the true top-1, from a trained model."""

    def __init__(self, model, window=DEFAULT_WINDOW):
        if model.arity != NUM_FEATURES:
            raise ParameterError('Stop model takes {} features, the trajectory pipeline emits {}'.format(
                model.arity, NUM_FEATURES))

        self.model = model
        self.window = window

    def probability(self, state):
        return self.model.predict(extract_features(state.trajectory, state, state.masked, self.window))


class OracleStop:
    """Answers 1 exactly when the best unmasked candidate is the nearest unmasked ground-truth id."""

    def __init__(self, truth_ids):
        self.truth_ids = [int(node) for node in truth_ids]

    def probability(self, state):
        target = next((node for node in self.truth_ids if node not in state.masked), None)
        best = state.best(state.masked)

        return 1.0 if best is not None and best[1] == target else 0.0


def as_stop(model, window=DEFAULT_WINDOW):
    if hasattr(model, 'probability'):
        return model

    return LearnedStop(model, window)


def adaptive_interval(predicted, recall_target, base_interval):
    """Steps to take before the next model call: long strides far from the target, 1 near it."""
    if base_interval < 1:
        raise ParameterError('base_interval must be positive, got {}'.format(base_interval))

    if predicted >= recall_target:
        return 1

    gap = (recall_target - predicted) / recall_target
    # Guard against 24.999... style rounding pushing ceil one step up.
    steps = math.ceil(base_interval * gap - 1e-9)

    return int(min(base_interval, max(1, steps)))


def forecast_recall(table, fits, n, k, recall_target, alpha):
    if k < 1 or n < 0 or n > k:
        raise ParameterError('Forecast needs 0 <= N <= K with K >= 1, got N={} K={}'.format(n, k))

    row = min(n, table.n_max)
    upper = min(k, table.r_max)
    residual = 0.0

    if upper > n:
        residual += float(table.probs[row, n:upper].sum())

    if k > table.r_max:
        ranks = np.arange(max(n + 1, table.r_max + 1), k + 1)
        residual += float(fits[row].predict(ranks).sum())

    return (n * (recall_target + alpha * (1 - recall_target)) + residual) / k


def _capped(state, params):
    return state.exhausted or (params.step_cap is not None and state.steps_taken >= params.step_cap)


def _advance(index, state, steps, params):
    if params.step_cap is not None:
        steps = min(steps, params.step_cap - state.steps_taken)

    search_multiple_steps(index, state, max(steps, 1))


def _refine(index, model, query, k, params, table=None, fits=None):
    if k < 1:
        raise ParameterError('K must be positive, got {}'.format(k))

    started = time.perf_counter()
    stop = as_stop(model, params.window)
    target = params.recall_target
    state = init_search(index, query)
    invocations = 0
    forecast_stop = 0
    n = 0

    while n < k:
        if table is not None and len(state.search_set) >= k:
            if forecast_recall(table, fits, n, k, target, params.alpha) >= target:
                forecast_stop = 1
                break

        if _capped(state, params):
            break

        mask_features(state, min(n, len(state.search_set)))

        while not _capped(state, params):
            # Nothing left unmasked: the model has no candidate to judge yet.
            if state.best(state.masked) is None:
                search_one_step(index, state)
                continue

            predicted = stop.probability(state)
            invocations += 1

            if predicted >= target:
                break

            if params.adaptive_frequency:
                _advance(index, state, adaptive_interval(predicted, target, params.base_interval), params)
            else:
                _advance(index, state, params.base_interval, params)

        n += 1

    return SearchOutcome(
        current_topk(state, k),
        state.steps_taken,
        state.cmps,
        invocations,
        forecast_stop,
        time.perf_counter() - started,
        n,
    )


def basic_search(index, model, query, k, params=None):
    return _refine(index, model, query, k, params or SearchParams())


def optimized_search(index, model, table, fits, query, k, params=None):
    params = params or SearchParams()

    if not params.forecast:
        return _refine(index, model, query, k, params)

    if not table.finalized:
        raise ParameterError('The probability table must be finalized before searching')

    return _refine(index, model, query, k, params, table, fits if fits is not None else DecayFits(table))
