import bisect
import heapq
import logging
import math
import struct
import zlib
from collections import namedtuple

import numpy as np

from kstop.errors import ArtifactError, ParameterError
from kstop.trajectory import Trajectory
from kstop.vectorstore import Metric


MAGIC = b'KSGI'
FORMAT_VERSION = 1

# magic, version, metric code, m, ef_construction, seed, level multiplier,
# node count, max level, entry point
HEADER = struct.Struct('<4sIBIIQdQIQ')
CRC = struct.Struct('<I')

MAX_LEVEL = 255


class GraphConfig:
    def __init__(self, m=16, ef_construction=200, seed=0, level_mult=None):
        if m < 2:
            raise ParameterError('M must be at least 2, got {}'.format(m))

        if ef_construction < m:
            raise ParameterError('ef_construction ({}) must be at least M ({})'.format(ef_construction, m))

        if seed < 0:
            raise ParameterError('Seed must be non-negative, got {}'.format(seed))

        self.m = m
        self.ef_construction = ef_construction
        self.seed = seed
        self.level_mult = level_mult if level_mult is not None else 1 / math.log(m)

    def max_degree(self, layer):
        return 2 * self.m if layer == 0 else self.m

    def describe(self):
        return {
            'm': self.m,
            'ef_construction': self.ef_construction,
            'seed': self.seed,
            'level_mult': self.level_mult,
        }

    def __eq__(self, other):
        return isinstance(other, GraphConfig) and self.describe() == other.describe()


class GraphIndex:
    def __init__(self, dataset, config, levels, layers, entry_point):
        self.dataset = dataset
        self.config = config
        self.levels = levels
        self.layers = layers
        self.entry_point = entry_point

    def __len__(self):
        return len(self.dataset)

    @property
    def max_level(self):
        return len(self.layers) - 1

    def neighbors(self, node, layer=0):
        return self.layers[layer][node]

    @classmethod
    def build(cls, dataset, config=None):
        return GraphBuilder(dataset, config or GraphConfig()).build()

    def stats(self):
        degrees = [len(links) for links in self.layers[0].values()]

        return {
            'nodes': len(self),
            'layers': len(self.layers),
            'entry_point': self.entry_point,
            'mean_degree': float(np.mean(degrees)),
            'max_degree': int(max(degrees)),
        }

    def to_bytes(self):
        parts = [HEADER.pack(
            MAGIC, FORMAT_VERSION, self.dataset.metric.code,
            self.config.m, self.config.ef_construction, self.config.seed, self.config.level_mult,
            len(self), self.max_level, self.entry_point
        )]
        parts.append(np.asarray(self.levels, dtype=np.uint8).tobytes())

        for layer in self.layers:
            for node in sorted(layer):
                links = layer[node]
                parts.append(struct.pack('<I', len(links)))
                parts.append(np.asarray(links, dtype='<u4').tobytes())

        payload = b''.join(parts)

        return payload + CRC.pack(zlib.crc32(payload))

    def save(self, path):
        with open(path, 'wb') as f:
            f.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data, dataset):
        if len(data) < HEADER.size + CRC.size:
            raise ArtifactError('Index file is truncated')

        payload, (crc,) = data[:-CRC.size], CRC.unpack(data[-CRC.size:])

        if zlib.crc32(payload) != crc:
            raise ArtifactError('Index file is corrupt (checksum mismatch)')

        magic, version, metric_code, m, ef_construction, seed, level_mult, n, max_level, entry_point = \
            HEADER.unpack_from(payload)

        if magic != MAGIC:
            raise ArtifactError('Not an index file (magic {!r})'.format(magic))

        if version != FORMAT_VERSION:
            raise ArtifactError('Unsupported index format version {}'.format(version))

        if Metric.from_code(metric_code) != dataset.metric or n != len(dataset):
            raise ArtifactError('Index was built for {} vectors under {}, dataset has {} under {}'.format(
                n, Metric.from_code(metric_code).kind, len(dataset), dataset.metric.kind))

        offset = HEADER.size
        levels = np.frombuffer(payload, dtype=np.uint8, count=n, offset=offset).astype(np.int64)
        offset += n
        layers = []

        try:
            for level in range(max_level + 1):
                layer = {}

                for node in np.flatnonzero(levels >= level).tolist():
                    (count,) = struct.unpack_from('<I', payload, offset)
                    offset += 4
                    layer[node] = np.frombuffer(payload, dtype='<u4', count=count, offset=offset).tolist()
                    offset += 4 * count

                layers.append(layer)
        except (struct.error, ValueError):
            raise ArtifactError('Index file is truncated')

        if offset != len(payload):
            raise ArtifactError('Index file has {} trailing bytes'.format(len(payload) - offset))

        config = GraphConfig(m, ef_construction, seed, level_mult)

        return cls(dataset, config, levels, layers, entry_point)

    @classmethod
    def load(cls, path, dataset):
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read(), dataset)


def _greedy(dataset, adjacency, query, query_norm, node, dist, on_evaluate):
    while True:
        links = adjacency[node]

        if not links:
            return node, dist

        dists = dataset.distances(query, links, query_norm)
        on_evaluate(dists.tolist())
        best = int(np.argmin(dists))

        if dists[best] >= dist:
            return node, dist

        node, dist = links[best], float(dists[best])


def _search_layer(dataset, adjacency, query, query_norm, entries, ef):
    """Classic ef-bounded best-first search on one layer.

    Returns the found (distance, id) pairs in ascending order together with the
    number of expansions and distance evaluations spent.
    """
    visited = set(node for _, node in entries)
    candidates = list(entries)
    heapq.heapify(candidates)
    # Max-heap on (distance, id): the worst result sits on top.
    results = [(-dist, -node) for dist, node in entries]
    heapq.heapify(results)

    while len(results) > ef:
        heapq.heappop(results)

    steps = 0
    cmps = 0

    while candidates:
        dist, node = heapq.heappop(candidates)

        if len(results) >= ef and dist > -results[0][0]:
            break

        steps += 1
        links = [link for link in adjacency[node] if link not in visited]

        if not links:
            continue

        visited.update(links)
        dists = dataset.distances(query, links, query_norm).tolist()
        cmps += len(links)

        for link_dist, link in zip(dists, links):
            if len(results) < ef or link_dist < -results[0][0]:
                heapq.heappush(candidates, (link_dist, link))
                heapq.heappush(results, (-link_dist, -link))

                if len(results) > ef:
                    heapq.heappop(results)

    found = sorted((-neg_dist, -neg_node) for neg_dist, neg_node in results)

    return found, steps, cmps


class GraphBuilder:
    def __init__(self, dataset, config):
        self.dataset = dataset
        self.config = config
        self.layers = []
        self.entry_point = 0
        self.top = -1
        self.logger = logging.getLogger(self.__class__.__name__)

    def build(self):
        n = len(self.dataset)
        rng = np.random.default_rng(self.config.seed)
        levels = np.floor(-np.log1p(-rng.random(n)) * self.config.level_mult).astype(np.int64)
        levels = np.minimum(levels, MAX_LEVEL)

        self.layers = [{} for _ in range(int(levels.max()) + 1)]

        for node in range(n):
            self.insert(node, int(levels[node]))

            if node > 0 and node % 1000 == 0:
                self.logger.info('Inserted %d / %d vectors', node, n)

        self.logger.info('Built graph over %d vectors with %d layers', n, len(self.layers))

        return GraphIndex(self.dataset, self.config, levels, self.layers, self.entry_point)

    def vector(self, node):
        vector = self.dataset.vectors[node].astype(np.float64)
        norm = self.dataset.norms[node] if self.dataset.norms is not None else None

        return vector, norm

    def insert(self, node, level):
        for layer in range(level + 1):
            self.layers[layer][node] = []

        if self.top < 0:
            self.entry_point = node
            self.top = level
            return

        query, query_norm = self.vector(node)
        entry = self.entry_point
        entry_dist = float(self.dataset.distances(query, [entry], query_norm)[0])

        for layer in range(self.top, level, -1):
            entry, entry_dist = _greedy(
                self.dataset, self.layers[layer], query, query_norm, entry, entry_dist, lambda dists: None)

        entries = [(entry_dist, entry)]

        for layer in range(min(level, self.top), -1, -1):
            found, _, _ = _search_layer(
                self.dataset, self.layers[layer], query, query_norm, entries, self.config.ef_construction)
            chosen = self.select(found, self.config.m)
            self.layers[layer][node] = [link for _, link in chosen]
            cap = self.config.max_degree(layer)

            for _, link in chosen:
                back_links = self.layers[layer][link]
                back_links.append(node)

                if len(back_links) > cap:
                    self.shrink(link, layer, cap)

            entries = found

        if level > self.top:
            self.entry_point = node
            self.top = level

    def shrink(self, node, layer, cap):
        vector, norm = self.vector(node)
        links = self.layers[layer][node]
        dists = self.dataset.distances(vector, links, norm).tolist()
        chosen = self.select(sorted(zip(dists, links)), cap)

        self.layers[layer][node] = [link for _, link in chosen]

    def select(self, candidates, m):
        """Diversity heuristic: keep a candidate only if no kept neighbour is
        closer to it than the base node is; back-fill with pruned ones."""
        if len(candidates) <= m:
            return list(candidates)

        selected = []
        pruned = []

        for dist, candidate in candidates:
            if len(selected) >= m:
                break

            if selected:
                vector, norm = self.vector(candidate)
                to_selected = self.dataset.distances(vector, [node for _, node in selected], norm)

                if np.any(to_selected < dist):
                    pruned.append((dist, candidate))
                    continue

            selected.append((dist, candidate))

        for item in pruned:
            if len(selected) >= m:
                break

            selected.append(item)

        return selected


class SearchState:
    def __init__(self, query, query_norm):
        self.query = query
        self.query_norm = query_norm
        self.frontier = []
        # Sorted (distance, id) pairs; unbounded during learned search.
        self.search_set = []
        self.visited = set()
        self.masked = set()
        self.trajectory = Trajectory()
        self.steps_taken = 0
        self.hops = 0
        self.cmps = 0
        self.dist_start = None
        self.exhausted = False
        self.last_ids = []

    def record(self, distances):
        self.trajectory.extend(distances)
        self.cmps += len(distances)

    def best(self, masked=()):
        for entry in self.search_set:
            if entry[1] not in masked:
                return entry

        return None

    def topk(self, k, masked=()):
        result = []

        for _, node in self.search_set:
            if len(result) >= k:
                break

            if node not in masked:
                result.append(node)

        return result


def init_search(index, query):
    dataset = index.dataset
    query = dataset.check_query(query)
    query_norm = dataset.query_norm(query)
    state = SearchState(query, query_norm)

    entry = index.entry_point
    entry_dist = float(dataset.distances(query, [entry], query_norm)[0])
    state.record([entry_dist])

    for layer in range(index.max_level, 0, -1):
        entry, entry_dist = _greedy(dataset, index.layers[layer], query, query_norm, entry, entry_dist, state.record)

    state.dist_start = entry_dist
    state.frontier = [(entry_dist, entry)]
    state.search_set = [(entry_dist, entry)]
    state.visited = {entry}
    state.last_ids = [entry]

    return state


def search_one_step(index, state):
    state.last_ids = []

    if not state.frontier:
        state.exhausted = True
        return state

    _, node = heapq.heappop(state.frontier)
    state.steps_taken += 1
    state.hops += 1

    links = [link for link in index.layers[0][node] if link not in state.visited]

    if links:
        state.visited.update(links)
        dists = index.dataset.distances(state.query, links, state.query_norm).tolist()
        state.record(dists)

        for dist, link in zip(dists, links):
            heapq.heappush(state.frontier, (dist, link))
            bisect.insort(state.search_set, (dist, link))

        state.last_ids = links

    if not state.frontier:
        state.exhausted = True

    return state


def search_multiple_steps(index, state, steps):
    if steps < 1:
        raise ParameterError('Step count must be positive, got {}'.format(steps))

    for _ in range(steps):
        if state.exhausted:
            break

        search_one_step(index, state)

    return state


def current_topk(state, k, masked=()):
    return state.topk(k, masked)


FixedResult = namedtuple('FixedResult', 'ids steps cmps')


def fixed_search(index, query, k, ef):
    if k < 1:
        raise ParameterError('K must be positive, got {}'.format(k))

    if ef < k:
        raise ParameterError('ef ({}) must be at least K ({})'.format(ef, k))

    dataset = index.dataset
    query = dataset.check_query(query)
    query_norm = dataset.query_norm(query)

    evaluated = [1]
    entry = index.entry_point
    entry_dist = float(dataset.distances(query, [entry], query_norm)[0])

    def count(dists):
        evaluated[0] += len(dists)

    for layer in range(index.max_level, 0, -1):
        entry, entry_dist = _greedy(dataset, index.layers[layer], query, query_norm, entry, entry_dist, count)

    found, steps, cmps = _search_layer(dataset, index.layers[0], query, query_norm, [(entry_dist, entry)], ef)

    return FixedResult([node for _, node in found[:k]], steps, evaluated[0] + cmps)
