import csv
import logging
import struct
import zlib
from collections import namedtuple

import numpy as np
from sklearn.isotonic import IsotonicRegression

from kstop.errors import ArtifactError, ParameterError


MAGIC = b'KSPT'
FORMAT_VERSION = 1

# magic, version, n_max, r_max, finalized flag
HEADER = struct.Struct('<4sIIIB')
CRC = struct.Struct('<I')

DEFAULT_SIZE = 200


class ProbTable:
    """Profiled Pr[rank-r ground truth in the search set | top-N prefix found].

    Rows are N = 0..n_max, columns are r = 1..r_max (column r - 1).
    """

    def __init__(self, n_max=DEFAULT_SIZE, r_max=DEFAULT_SIZE):
        if n_max < 0 or r_max < 1:
            raise ParameterError('Table needs n_max >= 0 and r_max >= 1, got {} x {}'.format(n_max, r_max))

        self.n_max = n_max
        self.r_max = r_max
        self.hits = np.zeros((n_max + 1, r_max), dtype=np.int64)
        self.observations = np.zeros(n_max + 1, dtype=np.int64)
        self.probs = np.zeros((n_max + 1, r_max), dtype=np.float64)
        self.finalized = False
        self.deviation = 0.0
        self.logger = logging.getLogger(self.__class__.__name__)

    def observe(self, n, present):
        row = min(n, self.n_max)
        self.observations[row] += 1
        self.hits[row] += present

    def merge(self, other):
        if (other.n_max, other.r_max) != (self.n_max, self.r_max):
            raise ParameterError('Cannot merge tables of different shapes')

        self.hits += other.hits
        self.observations += other.observations

    def finalize(self):
        populated = self.observations > 0
        empirical = np.zeros_like(self.probs)
        empirical[populated] = self.hits[populated] / self.observations[populated, None]

        probs = empirical.copy()
        last = None

        # Unobserved rows borrow the nearest observed smaller-N row, which
        # underestimates thanks to monotonicity in N.
        for row in range(self.n_max + 1):
            if populated[row]:
                last = row
            elif last is not None:
                probs[row] = empirical[last]

        rows = np.arange(self.n_max + 1)
        ranks = np.arange(1, self.r_max + 1)
        prefix_found = ranks[None, :] <= rows[:, None]
        probs[prefix_found] = 1.0

        drops = probs[:-1] - probs[1:]
        self.deviation = float(drops.max()) if drops.size else 0.0
        self.logger.info('Monotonicity violation before isotonic pass: %.4f', max(self.deviation, 0.0))

        weights = np.maximum(self.observations, 1).astype(np.float64)
        isotonic = IsotonicRegression(increasing=True, y_min=0.0, y_max=1.0)

        for column in range(self.r_max):
            probs[:, column] = isotonic.fit_transform(rows, probs[:, column], sample_weight=weights)

        probs[prefix_found] = 1.0
        self.probs = np.clip(probs, 0.0, 1.0)
        self.finalized = True

        return self

    def lookup(self, n, r):
        if r < 1 or r > self.r_max:
            raise ParameterError('Rank {} outside the table (1..{})'.format(r, self.r_max))

        return float(self.probs[min(n, self.n_max), r - 1])

    def to_bytes(self):
        payload = b''.join([
            HEADER.pack(MAGIC, FORMAT_VERSION, self.n_max, self.r_max, int(self.finalized)),
            self.probs.astype('<f8').tobytes(),
            self.hits.astype('<i8').tobytes(),
            self.observations.astype('<i8').tobytes(),
        ])

        return payload + CRC.pack(zlib.crc32(payload))

    @classmethod
    def from_bytes(cls, data):
        if len(data) < HEADER.size + CRC.size:
            raise ArtifactError('Table file is truncated')

        payload, (crc,) = data[:-CRC.size], CRC.unpack(data[-CRC.size:])

        if zlib.crc32(payload) != crc:
            raise ArtifactError('Table file is corrupt (checksum mismatch)')

        magic, version, n_max, r_max, finalized = HEADER.unpack_from(payload)

        if magic != MAGIC:
            raise ArtifactError('Not a probability table file (magic {!r})'.format(magic))

        if version != FORMAT_VERSION:
            raise ArtifactError('Unsupported table format version {}'.format(version))

        cells = (n_max + 1) * r_max
        expected = HEADER.size + 8 * (2 * cells + n_max + 1)

        if len(payload) != expected:
            raise ArtifactError('Table file holds {} bytes, expected {}'.format(len(payload), expected))

        table = cls(n_max, r_max)
        offset = HEADER.size
        table.probs = np.frombuffer(payload, '<f8', cells, offset).reshape(n_max + 1, r_max).copy()
        offset += 8 * cells
        table.hits = np.frombuffer(payload, '<i8', cells, offset).reshape(n_max + 1, r_max).astype(np.int64)
        offset += 8 * cells
        table.observations = np.frombuffer(payload, '<i8', n_max + 1, offset).astype(np.int64)
        table.finalized = bool(finalized)

        return table

    def save(self, path):
        with open(path, 'wb') as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read())


class DecayFit(namedtuple('DecayFit', 'a b')):
    """p(r) = clamp(a - b ln r, 0, 1) with b >= 0."""

    def predict(self, ranks):
        return np.clip(self.a - self.b * np.log(np.asarray(ranks, dtype=np.float64)), 0.0, 1.0)


def fit_log_decay(ranks, probs):
    ranks = np.asarray(ranks, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)

    if ranks.size < 2:
        raise ParameterError('A decay fit needs at least 2 points, got {}'.format(ranks.size))

    slope, intercept = np.polyfit(np.log(ranks), probs, 1)

    if slope > 0:
        return DecayFit(float(probs.mean()), 0.0)

    return DecayFit(float(intercept), float(-slope))


def fit_decay(table, n):
    """Fit row N over ranks N+1..r_max; finalized rows include their backfill."""
    row = min(n, table.n_max)

    if not table.finalized:
        raise ParameterError('Decay fits need a finalized table')

    ranks = np.arange(row + 1, table.r_max + 1)

    return fit_log_decay(ranks, table.probs[row, ranks - 1])


class DecayFits:
    """Per-row decay fits, fitted lazily and cached."""

    def __init__(self, table):
        self.table = table
        self.fits = {}

    def __getitem__(self, n):
        row = min(n, self.table.n_max)

        if row not in self.fits:
            try:
                self.fits[row] = fit_decay(self.table, row)
            except ParameterError:
                # Too few points beyond N: hold the row's last column constant.
                self.fits[row] = DecayFit(float(self.table.probs[row, -1]), 0.0)

        return self.fits[row]

    def fit_all(self):
        for row in range(self.table.n_max + 1):
            self[row]

        return self

    def save(self, path):
        self.fit_all()

        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['n', 'a', 'b'])

            for row in sorted(self.fits):
                fit = self.fits[row]
                writer.writerow([row, repr(fit.a), repr(fit.b)])

    @classmethod
    def load(cls, path, table):
        fits = cls(table)

        with open(path, newline='') as f:
            reader = csv.reader(f)

            try:
                if next(reader) != ['n', 'a', 'b']:
                    raise ArtifactError('{}: unexpected decay fit header'.format(path))

                for line in reader:
                    fits.fits[int(line[0])] = DecayFit(float(line[1]), float(line[2]))
            except (StopIteration, IndexError, ValueError):
                raise ArtifactError('{}: malformed decay fit file'.format(path))

        return fits
