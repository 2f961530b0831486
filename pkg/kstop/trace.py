import csv
from collections import namedtuple

import numpy as np

from kstop.errors import TraceError


TraceEntry = namedtuple('TraceEntry', 'query_id k vector')
TraceEntry.__new__.__defaults__ = (None,)


class QueryTrace:
    """Replayable workload: one `query_id,K[,x1,...,xd]` row per request."""

    def __init__(self, entries=()):
        self.entries = []

        for entry in entries:
            self.append(entry)

    def append(self, entry):
        if entry.k < 1:
            raise TraceError('K must be at least 1, got {} for query {}'.format(entry.k, entry.query_id))

        if entry.query_id < 0:
            raise TraceError('Query ids must be non-negative, got {}'.format(entry.query_id))

        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def max_k(self):
        return max((entry.k for entry in self.entries), default=0)

    def check_queries(self, query_count, source='queries'):
        for entry in self.entries:
            if entry.vector is None and entry.query_id >= query_count:
                raise TraceError('Trace references query {} but only {} {} are loaded'.format(
                    entry.query_id, query_count, source))

    @classmethod
    def load(cls, path):
        trace = cls()

        with open(path, newline='') as f:
            for line_number, row in enumerate(csv.reader(f), 1):
                row = [cell.strip() for cell in row]

                if not row or not row[0] or row[0].startswith('#'):
                    continue

                if line_number == 1 and row[0].lower() == 'query_id':
                    continue

                try:
                    vector = np.array([float(cell) for cell in row[2:]]) if len(row) > 2 else None
                    trace.append(TraceEntry(int(row[0]), int(row[1]), vector))
                except (ValueError, IndexError):
                    raise TraceError('{}:{}: expected query_id,K[,vector...], got "{}"'.format(
                        path, line_number, ','.join(row)))

        return trace

    def save(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['query_id', 'K'])

            for entry in self.entries:
                extra = [repr(float(x)) for x in entry.vector] if entry.vector is not None else []
                writer.writerow([entry.query_id, entry.k] + extra)


def parse_weights(text):
    """'1:0.25,10:0.25,...' -> [(1, 0.25), (10, 0.25), ...]"""
    weights = []

    for part in text.split(','):
        try:
            k, weight = part.split(':')
            weights.append((int(k), float(weight)))
        except ValueError:
            raise TraceError('K weights must look like K:weight, got "{}"'.format(part))

    if not weights or any(k < 1 or weight < 0 for k, weight in weights):
        raise TraceError('K weights need K >= 1 and non-negative weights: "{}"'.format(text))

    if sum(weight for _, weight in weights) <= 0:
        raise TraceError('K weights must not all be zero: "{}"'.format(text))

    return weights


def synth_trace(entry_count, query_count, weights, seed=0):
    if query_count < 1 and entry_count > 0:
        raise TraceError('A synthetic trace needs at least one query')

    rng = np.random.default_rng(seed)
    ks = np.array([k for k, _ in weights])
    p = np.array([weight for _, weight in weights], dtype=np.float64)
    chosen = rng.choice(ks, size=entry_count, p=p / p.sum())
    query_ids = rng.integers(max(query_count, 1), size=entry_count)

    return QueryTrace(TraceEntry(int(q), int(k)) for q, k in zip(query_ids, chosen))
