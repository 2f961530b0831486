import csv
import os

import numpy as np

from kstop.errors import ArtifactError, TraceError


SCHEMA_VERSION = 1

COLUMNS = (
    'query_id',
    'K',
    'recall',
    'steps',
    'cmps',
    'model_invocations',
    'forecast_stop',
    'ranks_decided',
    'prefix_found',
    'wall_time',
)

INTEGER_COLUMNS = ('query_id', 'K', 'steps', 'cmps', 'model_invocations', 'forecast_stop', 'ranks_decided',
                   'prefix_found')

SUMMARISED = ('recall', 'cmps', 'steps', 'model_invocations', 'wall_time')


def summary_path(path):
    stem, _ = os.path.splitext(path)
    return stem + '.summary.csv'


def prefix_found(truth_ids, result_ids, k):
    """Largest n such that ground-truth ranks 1..n are all among the results."""
    found = set(int(node) for node in result_ids)
    n = 0

    while n < k and n < len(truth_ids) and int(truth_ids[n]) in found:
        n += 1

    return n


class RunReport:
    def __init__(self, method, rows=None, params=None, extras=None):
        self.method = method
        self.rows = list(rows or [])
        self.params = dict(params or {})
        # Run-level measurements not recomputable from rows, e.g. replay_seconds.
        self.extras = dict(extras or {})

    def __len__(self):
        return len(self.rows)

    def add_row(self, row):
        self.rows.append(dict((column, row[column]) for column in COLUMNS))

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    def aggregates(self):
        rows = [('schema_version', SCHEMA_VERSION), ('method', self.method), ('queries', len(self.rows))]

        for name in SUMMARISED:
            values = self.column(name)

            if values.size == 0:
                continue

            rows.append(('mean_{}'.format(name), float(values.mean())))

            for q in (50, 90, 99):
                rows.append(('p{}_{}'.format(q, name), float(np.percentile(values, q))))

        if self.rows:
            target = self.params.get('search.recall_target')

            if target is not None:
                rows.append(('frac_recall_ge_target', float(np.mean(self.column('recall') >= float(target) - 1e-12))))

            rows.append(('forecast_stop_rate', float(self.column('forecast_stop').mean())))

            if self.method != 'fixed':
                diverged = self.column('ranks_decided') != self.column('prefix_found')
                rows.append(('divergence_rate', float(diverged.mean())))

        for name in sorted(self.extras):
            rows.append((name, self.extras[name]))

        for name in sorted(self.params):
            rows.append(('param.{}'.format(name), self.params[name]))

        return rows

    def save(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows)

        with open(summary_path(path), 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['metric', 'value'])
            writer.writerows(self.aggregates())

    @classmethod
    def load(cls, path):
        method = 'unknown'
        params = {}

        if os.path.exists(summary_path(path)):
            with open(summary_path(path), newline='') as f:
                for row in csv.reader(f):
                    if len(row) != 2:
                        continue

                    if row[0] == 'method':
                        method = row[1]
                    elif row[0].startswith('param.'):
                        params[row[0][len('param.'):]] = row[1]

        rows = []

        with open(path, newline='') as f:
            reader = csv.DictReader(f)

            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise ArtifactError('{}: unexpected run report columns {}'.format(path, reader.fieldnames))

            for row in reader:
                rows.append(dict(
                    (column, int(row[column]) if column in INTEGER_COLUMNS else float(row[column]))
                    for column in COLUMNS
                ))

        return cls(method, rows, params)


def _keyed(report):
    keyed = {}
    seen = {}

    for row in report.rows:
        key = (row['query_id'], row['K'])
        seen[key] = seen.get(key, 0) + 1
        keyed[key + (seen[key],)] = row

    return keyed


COMPARE_COLUMNS = (
    'report',
    'method',
    'queries',
    'mean_recall',
    'recall_delta',
    'queries_recall_worse',
    'mean_cmps',
    'cmps_ratio',
    'mean_invocations',
    'invocation_reduction_pct',
)


def compare(named_reports):
    """Paired statistics of each report against the first one."""
    if not named_reports:
        raise TraceError('Nothing to compare')

    _, baseline = named_reports[0]
    base_rows = _keyed(baseline)
    keys = sorted(base_rows)
    base_recall = np.array([base_rows[key]['recall'] for key in keys])
    base_cmps = np.array([base_rows[key]['cmps'] for key in keys], dtype=np.float64)
    base_invocations = np.array([base_rows[key]['model_invocations'] for key in keys], dtype=np.float64)
    result = []

    for name, report in named_reports:
        rows = _keyed(report)

        if set(rows) != set(base_rows):
            raise TraceError('{} was replayed on a different trace than {}'.format(name, named_reports[0][0]))

        recall = np.array([rows[key]['recall'] for key in keys])
        cmps = np.array([rows[key]['cmps'] for key in keys], dtype=np.float64)
        invocations = np.array([rows[key]['model_invocations'] for key in keys], dtype=np.float64)
        empty = len(keys) == 0

        def mean(values):
            return float(values.mean()) if not empty else 0.0

        reduction = ''

        if not empty and base_invocations.sum() > 0:
            reduction = 100.0 * (1.0 - invocations.sum() / base_invocations.sum())

        result.append({
            'report': name,
            'method': report.method,
            'queries': len(keys),
            'mean_recall': mean(recall),
            'recall_delta': mean(recall - base_recall),
            'queries_recall_worse': int(np.sum(recall < base_recall)),
            'mean_cmps': mean(cmps),
            'cmps_ratio': float(cmps.sum() / base_cmps.sum()) if not empty and base_cmps.sum() > 0 else '',
            'mean_invocations': mean(invocations),
            'invocation_reduction_pct': reduction,
        })

    return result


def save_comparison(rows, path):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=COMPARE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
