import logging
import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from kstop.errors import DimensionMismatch, FormatError, ParameterError


logger = logging.getLogger(__name__)

# Element type of each on-disk format. Every record of the *vecs formats is a
# little-endian int32 dimension followed by that many elements.
FORMATS = {
    'fvecs': np.dtype('<f4'),
    'ivecs': np.dtype('<i4'),
    'bvecs': np.dtype('u1'),
    'raw-f32': np.dtype('<f4'),
}

DISTRIBUTIONS = ('uniform', 'gaussian-clusters')

CLUSTER_SPREAD = 0.05


class Metric:
    SQUARED_EUCLIDEAN = 'squared-euclidean'
    INNER_PRODUCT = 'inner-product'
    COSINE = 'cosine'

    KINDS = (SQUARED_EUCLIDEAN, INNER_PRODUCT, COSINE)

    def __init__(self, kind=SQUARED_EUCLIDEAN):
        if kind not in self.KINDS:
            raise ParameterError('Unknown metric: {}'.format(kind))

        self.kind = kind

    @property
    def code(self):
        return self.KINDS.index(self.kind)

    @classmethod
    def from_code(cls, code):
        if code < 0 or code >= len(cls.KINDS):
            raise ParameterError('Unknown metric code: {}'.format(code))

        return cls(cls.KINDS[code])

    def distance(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)

        if a.shape != b.shape:
            raise DimensionMismatch('Cannot compare vectors of dimension {} and {}'.format(a.size, b.size))

        if self.kind == self.SQUARED_EUCLIDEAN:
            diff = a - b
            return float(np.dot(diff, diff))

        if self.kind == self.INNER_PRODUCT:
            return -float(np.dot(a, b))

        norm_a = np.linalg.norm(a)
        norm_b = np.linalg.norm(b)

        if norm_a == 0 or norm_b == 0:
            raise ParameterError('Cosine distance is undefined for a zero-norm vector')

        return -float(np.dot(a, b) / (norm_a * norm_b))

    def distances(self, query, matrix, norms=None, query_norm=None):
        """Minimized surrogate from `query` to every row of `matrix`."""
        if self.kind == self.SQUARED_EUCLIDEAN:
            diff = matrix - query
            return np.einsum('ij,ij->i', diff, diff)

        dots = matrix @ query

        if self.kind == self.INNER_PRODUCT:
            return -dots

        return -dots / (norms * query_norm)

    def __eq__(self, other):
        return isinstance(other, Metric) and other.kind == self.kind

    def __repr__(self):
        return 'Metric({!r})'.format(self.kind)


def distance(a, b, metric=None):
    return (metric or Metric()).distance(a, b)


class Dataset:
    def __init__(self, vectors, metric=None, element_kind=None):
        vectors = np.asarray(vectors)

        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ParameterError('A dataset needs at least one vector of dimension >= 1, got shape {}'.format(vectors.shape))

        if element_kind is None:
            element_kind = 'uint8' if vectors.dtype == np.uint8 else 'float32'

        self.element_kind = element_kind
        self.metric = metric or Metric()
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.vectors.setflags(write=False)
        self.norms = None

        if self.metric.kind == Metric.COSINE:
            self.norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
            zero = np.flatnonzero(self.norms == 0)

            if zero.size > 0:
                raise ParameterError('Vector {} has zero norm, which cosine cannot rank'.format(int(zero[0])))

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def check_query(self, query):
        query = np.asarray(query, dtype=np.float64).ravel()

        if query.size != self.dim:
            raise DimensionMismatch('Query has dimension {}, dataset has {}'.format(query.size, self.dim))

        return query

    def query_norm(self, query):
        if self.metric.kind != Metric.COSINE:
            return None

        norm = float(np.linalg.norm(query))

        if norm == 0:
            raise ParameterError('Cosine distance is undefined for a zero-norm query')

        return norm

    def distances(self, query, ids=None, query_norm=None):
        """Distances from an already checked query to `ids` (all vectors if None)."""
        if self.metric.kind == Metric.COSINE and query_norm is None:
            query_norm = self.query_norm(query)

        if ids is None:
            return self.metric.distances(query, self.vectors, self.norms, query_norm)

        norms = self.norms[ids] if self.norms is not None else None

        return self.metric.distances(query, self.vectors[ids], norms, query_norm)


def read_vecs(path, fmt, dim=None):
    if fmt not in FORMATS:
        raise FormatError('Unknown vector format: {}'.format(fmt))

    element = FORMATS[fmt]
    raw = np.fromfile(path, dtype=np.uint8)

    if fmt == 'raw-f32':
        if dim is None or dim < 1:
            raise FormatError('raw-f32 files need an explicit dimension')

        if raw.size == 0 or raw.size % (4 * dim) != 0:
            raise FormatError('{}: truncated raw-f32 file ({} bytes, dimension {})'.format(path, raw.size, dim))

        return raw.view(element).reshape(-1, dim).copy()

    if raw.size < 4:
        raise FormatError('{}: file too short to hold a record header'.format(path))

    first_dim = int(raw[:4].view('<i4')[0])

    if first_dim < 1:
        raise FormatError('{}: record 0 declares invalid dimension {}'.format(path, first_dim))

    record_size = 4 + first_dim * element.itemsize

    if raw.size % record_size == 0:
        records = raw.reshape(-1, record_size)
        dims = np.ascontiguousarray(records[:, :4]).view('<i4').ravel()

        if np.all(dims == first_dim):
            return np.ascontiguousarray(records[:, 4:]).view(element).reshape(-1, first_dim)

    _raise_record_error(path, raw, element, first_dim)


def _raise_record_error(path, raw, element, first_dim):
    # Slow path, only used to name the first bad record.
    offset = 0
    record = 0

    while offset < raw.size:
        if offset + 4 > raw.size:
            raise FormatError('{}: truncated header in record {}'.format(path, record))

        dim = int(raw[offset:offset + 4].view('<i4')[0])

        if dim != first_dim:
            raise DimensionMismatch('{}: record {} declares dimension {}, record 0 declares {}'.format(
                path, record, dim, first_dim))

        offset += 4 + dim * element.itemsize

        if offset > raw.size:
            raise FormatError('{}: truncated body in record {}'.format(path, record))

        record += 1

    raise FormatError('{}: malformed vector file'.format(path))


def save_vecs(path, array, fmt):
    if fmt not in FORMATS:
        raise FormatError('Unknown vector format: {}'.format(fmt))

    array = np.asarray(array)

    if array.ndim != 2:
        raise ParameterError('Expected a 2-D array, got shape {}'.format(array.shape))

    body = np.ascontiguousarray(array, dtype=FORMATS[fmt])

    if fmt == 'raw-f32':
        body.tofile(path)
        return

    n, dim = body.shape
    header = np.full((n, 1), dim, dtype='<i4').view(np.uint8)

    np.hstack([header, body.view(np.uint8).reshape(n, -1)]).tofile(path)


def load_dataset(path, fmt='fvecs', metric=None, dim=None):
    vectors = read_vecs(path, fmt, dim)
    element_kind = 'uint8' if fmt == 'bvecs' else 'float32'

    logger.info('Loaded %d vectors of dimension %d from %s', vectors.shape[0], vectors.shape[1], path)

    return Dataset(vectors, metric, element_kind)


GroundTruthRow = namedtuple('GroundTruthRow', 'ids distances')


def brute_force_topk(dataset, query, k):
    if k < 1 or k > len(dataset):
        raise ParameterError('K must lie in [1, {}], got {}'.format(len(dataset), k))

    query = dataset.check_query(query)
    dists = dataset.distances(query)

    if k < len(dists):
        kth = np.partition(dists, k - 1)[k - 1]
        candidates = np.flatnonzero(dists <= kth)
    else:
        candidates = np.arange(len(dists))

    # Primary key distance, ties broken by lower id.
    order = np.lexsort((candidates, dists[candidates]))[:k]
    ids = candidates[order]

    return GroundTruthRow(ids.astype(np.int64), dists[ids])


class GroundTruth:
    def __init__(self, ids, distances):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.distances = np.asarray(distances, dtype=np.float64)

        if self.ids.shape != self.distances.shape or self.ids.ndim != 2:
            raise ParameterError('Ground truth ids and distances must be matching 2-D arrays')

    def __len__(self):
        return self.ids.shape[0]

    @property
    def depth(self):
        return self.ids.shape[1]

    def save(self, prefix):
        save_vecs(prefix + '.ivecs', self.ids, 'ivecs')
        save_vecs(prefix + '.fvecs', self.distances, 'fvecs')

    @classmethod
    def load(cls, prefix):
        ids = read_vecs(prefix + '.ivecs', 'ivecs')
        distances = read_vecs(prefix + '.fvecs', 'fvecs')

        if ids.shape != distances.shape:
            raise FormatError('{}: ids and distances disagree in shape {} vs {}'.format(prefix, ids.shape, distances.shape))

        return cls(ids, distances)


def compute_ground_truth(dataset, queries, k, workers=1):
    queries = np.asarray(queries)

    def exact(query):
        return brute_force_topk(dataset, query, k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(exact, queries))
    else:
        rows = [exact(query) for query in queries]

    if not rows:
        return GroundTruth(np.zeros((0, k)), np.zeros((0, k)))

    return GroundTruth(np.stack([row.ids for row in rows]), np.stack([row.distances for row in rows]))


def recall_at_k(truth_ids, result_ids, k):
    if k < 1:
        raise ParameterError('K must be positive, got {}'.format(k))

    truth = set(int(i) for i in truth_ids[:k])
    found = set(int(i) for i in result_ids[:k])

    return len(truth & found) / k


def _synth_points(rng, n, d, distribution, n_centers):
    if distribution == 'uniform':
        return rng.random((n, d), dtype=np.float32)

    centers = rng.random((n_centers, d))
    assignment = rng.integers(n_centers, size=n)
    points = centers[assignment] + rng.normal(0.0, CLUSTER_SPREAD, size=(n, d))

    return points.astype(np.float32)


def _check_synth(n, d, distribution):
    if n < 1 or d < 1:
        raise ParameterError('Synthetic data needs n >= 1 and d >= 1, got n={} d={}'.format(n, d))

    if distribution not in DISTRIBUTIONS:
        raise ParameterError('Unknown distribution: {}'.format(distribution))


def synth_dataset(n, d, seed=0, distribution='uniform', metric=None):
    _check_synth(n, d, distribution)
    rng = np.random.default_rng(seed)

    return Dataset(_synth_points(rng, n, d, distribution, math.ceil(math.sqrt(n))), metric)


def synth_split(n, n_queries, d, seed=0, distribution='uniform', metric=None):
    """Base vectors plus queries drawn from the same generator."""
    _check_synth(n, d, distribution)
    rng = np.random.default_rng(seed)
    points = _synth_points(rng, n + n_queries, d, distribution, math.ceil(math.sqrt(n)))

    return Dataset(points[:n], metric), points[n:]
