import heapq
import logging
import struct
import zlib

import numpy as np

from kstop.errors import ArtifactError, ParameterError


MAGIC = b'KSGB'
FORMAT_VERSION = 1

# magic, version, arity, base score, learning rate, tree count, best round, stopping round
HEADER = struct.Struct('<4sIIddIII')
CRC = struct.Struct('<I')

GROWTH_MODES = ('leaf', 'depth')

# Scores are clipped so the sigmoid stays strictly inside (0, 1).
SCORE_LIMIT = 30.0
RATE_EPSILON = 1e-6
MIN_GAIN = 1e-12

logger = logging.getLogger(__name__)


def sigmoid(score):
    return 1.0 / (1.0 + np.exp(-np.clip(score, -SCORE_LIMIT, SCORE_LIMIT)))


def log_loss(labels, scores):
    p = sigmoid(scores)
    p = np.clip(p, 1e-15, 1 - 1e-15)

    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))


class TrainConfig:
    def __init__(self, max_rounds=100, max_leaves=31, max_depth=8, growth='leaf', min_samples_per_leaf=20,
                 learning_rate=0.1, reg_lambda=1.0, validation_fraction=0.2, early_stop_patience=5,
                 early_stop_tolerance=1e-4, seed=0):
        if max_rounds < 0:
            raise ParameterError('max_rounds must be non-negative, got {}'.format(max_rounds))

        if max_leaves < 2 or max_depth < 1 or min_samples_per_leaf < 1:
            raise ParameterError('Trees need max_leaves >= 2, max_depth >= 1 and min_samples_per_leaf >= 1')

        if growth not in GROWTH_MODES:
            raise ParameterError('Unknown growth mode: {}'.format(growth))

        if not 0 < learning_rate <= 1:
            raise ParameterError('learning_rate must lie in (0, 1], got {}'.format(learning_rate))

        if not 0 < validation_fraction < 1:
            raise ParameterError('validation_fraction must lie in (0, 1), got {}'.format(validation_fraction))

        if early_stop_patience < 1 or reg_lambda < 0:
            raise ParameterError('early_stop_patience must be positive and reg_lambda non-negative')

        self.max_rounds = max_rounds
        self.max_leaves = max_leaves
        self.max_depth = max_depth
        self.growth = growth
        self.min_samples_per_leaf = min_samples_per_leaf
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.validation_fraction = validation_fraction
        self.early_stop_patience = early_stop_patience
        self.early_stop_tolerance = early_stop_tolerance
        self.seed = seed

    def describe(self):
        return dict(vars(self))


class RegressionTree:
    """Axis-aligned threshold tree; `feature == -1` marks a leaf.

    Rows with `x[feature] <= threshold` go left.
    """

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)

    def __len__(self):
        return len(self.feature)

    @property
    def depth(self):
        depths = np.zeros(len(self), dtype=np.int64)

        # Children always have larger indices than their parent.
        for node in range(len(self)):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1

        return int(depths.max())

    def predict_many(self, features):
        node = np.zeros(features.shape[0], dtype=np.int64)

        while True:
            active = np.flatnonzero(self.feature[node] >= 0)

            if active.size == 0:
                return self.value[node]

            current = node[active]
            go_left = features[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])


class TreeGrower:
    def __init__(self, config):
        self.config = config

    def grow(self, features, grad, hess):
        self.features = features
        self.grad = grad
        self.hess = hess
        self.nodes = []

        root = self.new_leaf(np.arange(features.shape[0]), 0)
        queue = []
        self.push_split(queue, root)
        leaves = 1

        while queue and leaves < self.config.max_leaves:
            _, node, split = heapq.heappop(queue)
            feature, threshold, _ = split
            rows = self.nodes[node]['rows']
            go_left = self.features[rows, feature] <= threshold
            depth = self.nodes[node]['depth'] + 1

            left = self.new_leaf(rows[go_left], depth)
            right = self.new_leaf(rows[~go_left], depth)
            self.nodes[node].update(feature=feature, threshold=threshold, left=left, right=right)
            leaves += 1

            self.push_split(queue, left)
            self.push_split(queue, right)

        return RegressionTree(
            [n['feature'] for n in self.nodes],
            [n['threshold'] for n in self.nodes],
            [n['left'] for n in self.nodes],
            [n['right'] for n in self.nodes],
            [n['value'] for n in self.nodes],
        )

    def new_leaf(self, rows, depth):
        g = self.grad[rows].sum()
        h = self.hess[rows].sum()

        self.nodes.append({
            'rows': rows,
            'depth': depth,
            'feature': -1,
            'threshold': 0.0,
            'left': -1,
            'right': -1,
            'value': float(-g / (h + self.config.reg_lambda)),
        })

        return len(self.nodes) - 1

    def push_split(self, queue, node):
        if self.nodes[node]['depth'] >= self.config.max_depth:
            return

        split = self.best_split(self.nodes[node]['rows'])

        if split is None:
            return

        if self.config.growth == 'leaf':
            priority = (-split[2], node)
        else:
            priority = (self.nodes[node]['depth'], node)

        heapq.heappush(queue, priority + (split,))

    def best_split(self, rows):
        min_leaf = self.config.min_samples_per_leaf
        count = rows.size

        if count < 2 * min_leaf:
            return None

        lam = self.config.reg_lambda
        grad = self.grad[rows]
        hess = self.hess[rows]
        total_g = grad.sum()
        total_h = hess.sum()
        parent = total_g * total_g / (total_h + lam)
        positions = np.arange(min_leaf - 1, count - min_leaf)
        best = None

        for feature in range(self.features.shape[1]):
            values = self.features[rows, feature]
            order = np.argsort(values, kind='stable')
            ordered = values[order]
            valid = positions[ordered[positions] < ordered[positions + 1]]

            if valid.size == 0:
                continue

            left_g = np.cumsum(grad[order])[valid]
            left_h = np.cumsum(hess[order])[valid]
            right_g = total_g - left_g
            right_h = total_h - left_h
            gain = left_g * left_g / (left_h + lam) + right_g * right_g / (right_h + lam) - parent
            pick = int(np.argmax(gain))

            if gain[pick] > MIN_GAIN and (best is None or gain[pick] > best[2]):
                low = ordered[valid[pick]]
                high = ordered[valid[pick] + 1]
                threshold = (low + high) / 2

                if threshold >= high:
                    threshold = low

                best = (feature, float(threshold), float(gain[pick]))

        return best


class GbdtModel:
    def __init__(self, base_score, learning_rate, arity, trees=(), best_round=0, stopping_round=0):
        self.base_score = float(base_score)
        self.learning_rate = float(learning_rate)
        self.arity = int(arity)
        self.trees = list(trees)
        self.best_round = best_round
        self.stopping_round = stopping_round
        self.history = []
        self._compile()

    def _compile(self):
        # Stacked, padded tree arrays so one prediction walks every tree at once.
        # Leaves point to themselves, so extra iterations are harmless.
        width = max([len(tree) for tree in self.trees] or [1])
        count = len(self.trees)

        self._feature = np.zeros((count, width), dtype=np.int64)
        self._threshold = np.zeros((count, width), dtype=np.float64)
        self._left = np.tile(np.arange(width), (count, 1))
        self._right = np.tile(np.arange(width), (count, 1))
        self._value = np.zeros((count, width), dtype=np.float64)
        self._rows = np.arange(count)
        self._depth = 0

        for t, tree in enumerate(self.trees):
            size = len(tree)
            inner = tree.feature >= 0
            self._feature[t, :size] = np.where(inner, tree.feature, 0)
            self._threshold[t, :size] = tree.threshold
            self._left[t, :size] = np.where(inner, tree.left, np.arange(size))
            self._right[t, :size] = np.where(inner, tree.right, np.arange(size))
            self._value[t, :size] = tree.value
            self._depth = max(self._depth, tree.depth)

    def _check(self, features):
        features = np.asarray(features, dtype=np.float64)

        if features.shape[-1] != self.arity:
            raise ParameterError('Model expects {} features, got {}'.format(self.arity, features.shape[-1]))

        return features

    def raw_score(self, features):
        features = self._check(features).ravel()

        if not self.trees:
            return self.base_score

        node = np.zeros(len(self.trees), dtype=np.int64)

        for _ in range(self._depth):
            go_left = features[self._feature[self._rows, node]] <= self._threshold[self._rows, node]
            node = np.where(go_left, self._left[self._rows, node], self._right[self._rows, node])

        return self.base_score + self.learning_rate * float(self._value[self._rows, node].sum())

    def predict(self, features):
        return float(sigmoid(self.raw_score(features)))

    def predict_many(self, features):
        features = self._check(features)
        scores = np.full(features.shape[0], self.base_score)

        for tree in self.trees:
            scores += self.learning_rate * tree.predict_many(features)

        return sigmoid(scores)

    def to_bytes(self):
        parts = [HEADER.pack(MAGIC, FORMAT_VERSION, self.arity, self.base_score, self.learning_rate,
                             len(self.trees), self.best_round, self.stopping_round)]

        for tree in self.trees:
            parts.append(struct.pack('<I', len(tree)))
            parts.append(tree.feature.astype('<i4').tobytes())
            parts.append(tree.threshold.astype('<f8').tobytes())
            parts.append(tree.left.astype('<i4').tobytes())
            parts.append(tree.right.astype('<i4').tobytes())
            parts.append(tree.value.astype('<f8').tobytes())

        payload = b''.join(parts)

        return payload + CRC.pack(zlib.crc32(payload))

    @classmethod
    def from_bytes(cls, data):
        if len(data) < HEADER.size + CRC.size:
            raise ArtifactError('Model file is truncated')

        payload, (crc,) = data[:-CRC.size], CRC.unpack(data[-CRC.size:])

        if zlib.crc32(payload) != crc:
            raise ArtifactError('Model file is corrupt (checksum mismatch)')

        magic, version, arity, base_score, learning_rate, count, best_round, stopping_round = \
            HEADER.unpack_from(payload)

        if magic != MAGIC:
            raise ArtifactError('Not a model file (magic {!r})'.format(magic))

        if version != FORMAT_VERSION:
            raise ArtifactError('Unsupported model format version {}'.format(version))

        offset = HEADER.size
        trees = []

        def take(dtype, size):
            nonlocal offset
            array = np.frombuffer(payload, dtype=dtype, count=size, offset=offset)
            offset += array.nbytes
            return array

        try:
            for _ in range(count):
                (size,) = struct.unpack_from('<I', payload, offset)
                offset += 4
                trees.append(RegressionTree(
                    take('<i4', size), take('<f8', size), take('<i4', size), take('<i4', size), take('<f8', size)))
        except (struct.error, ValueError):
            raise ArtifactError('Model file is truncated')

        if offset != len(payload):
            raise ArtifactError('Model file has {} trailing bytes'.format(len(payload) - offset))

        return cls(base_score, learning_rate, arity, trees, best_round, stopping_round)

    def save(self, path):
        with open(path, 'wb') as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read())


def train(features, labels, config=None):
    config = config or TrainConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)

    if labels.size == 0:
        raise ParameterError('Cannot train on an empty record set')

    if features.ndim != 2 or features.shape[0] != labels.size:
        raise ParameterError('Expected a (records, features) matrix matching {} labels'.format(labels.size))

    rate = float(labels.mean())
    base_score = float(np.log(np.clip(rate, RATE_EPSILON, 1 - RATE_EPSILON) /
                              np.clip(1 - rate, RATE_EPSILON, 1 - RATE_EPSILON)))

    if labels.size < 2 or rate in (0.0, 1.0):
        logger.info('Training set holds a single class (positive rate %.3f); using a constant model', rate)
        return GbdtModel(base_score, config.learning_rate, features.shape[1])

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(labels.size)
    n_valid = min(max(int(round(labels.size * config.validation_fraction)), 1), labels.size - 1)
    valid, fit = order[:n_valid], order[n_valid:]

    fit_x, fit_y = features[fit], labels[fit]
    valid_x, valid_y = features[valid], labels[valid]
    fit_scores = np.full(fit_y.size, base_score)
    valid_scores = np.full(valid_y.size, base_score)

    grower = TreeGrower(config)
    trees = []
    history = []
    best_loss = log_loss(valid_y, valid_scores)
    best_round = 0
    stale = 0

    for round_number in range(1, config.max_rounds + 1):
        p = sigmoid(fit_scores)
        tree = grower.grow(fit_x, p - fit_y, p * (1 - p))
        trees.append(tree)

        fit_scores += config.learning_rate * tree.predict_many(fit_x)
        valid_scores += config.learning_rate * tree.predict_many(valid_x)

        fit_loss = log_loss(fit_y, fit_scores)
        valid_loss = log_loss(valid_y, valid_scores)
        history.append((fit_loss, valid_loss))

        logger.debug('Round %d: train loss %.6f, validation loss %.6f, %d nodes',
                     round_number, fit_loss, valid_loss, len(tree))

        if valid_loss < best_loss - config.early_stop_tolerance:
            best_loss = valid_loss
            best_round = round_number
            stale = 0
        else:
            stale += 1

            if stale >= config.early_stop_patience:
                break

    stopping_round = len(trees)
    logger.info('Boosting stopped at round %d of %d; keeping %d trees (validation loss %.6f)',
                stopping_round, config.max_rounds, best_round, best_loss)

    model = GbdtModel(base_score, config.learning_rate, features.shape[1], trees[:best_round],
                      best_round, stopping_round)
    model.history = history

    return model
