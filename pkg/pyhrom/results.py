"""
Result tables: one CSV per experiment kind, deterministic payload, plus a provenance sidecar (``.json``) with the
normalised config, its hash, the package version and the timestamps.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pyhrom.datasets.snapshots import CSV_FLOAT_FORMAT
from pyhrom.evaluation import fit_convergence_rate
from pyhrom.exceptions import HromFormatError

log = logging.getLogger(__name__)

RECONSTRUCTION_COLUMNS = ['variant', 'grid', 'rank', 'seed', 'train_error', 'test_error', 'best_epoch',
                          'best_train_error', 'best_test_error', 'wall_ms']
TRAINING_COLUMNS = ['variant', 'grid', 'rank', 'seed', 'epoch', 'train_loss', 'wall_ms']
METRIC_COLUMNS = ['metric', 'variant', 'grid', 'rank', 'seed', 'noise_level', 'value', 'dispersion']
SURROGATE_COLUMNS = ['variant', 'rank', 'trajectory', 'param', 'total_error', 'reconstruction_error',
                     'lstm_error']
KOOPMAN_COLUMNS = ['variant', 'n_frequencies', 'seed', 'omega', 'frequency_error', 'train_error', 'test_error']

LATENTS_DIR = 'latents'

KIND_COLUMNS = {
    'reconstruction': RECONSTRUCTION_COLUMNS,
    'training': TRAINING_COLUMNS,
    'koopman': KOOPMAN_COLUMNS,
    'surrogate': SURROGATE_COLUMNS,
    'sharpness': METRIC_COLUMNS,
    'noise': METRIC_COLUMNS,
    'contribution': METRIC_COLUMNS,
    'similarity': METRIC_COLUMNS,
}


def canonical_json(document: dict) -> str:
    return json.dumps(document, sort_keys=True, separators=(',', ':'), allow_nan=False)


def config_hash(document: dict) -> str:
    """ SHA-256 of the canonical JSON of ``document``. """

    return hashlib.sha256(canonical_json(document).encode('utf-8')).hexdigest()


@dataclass
class ResultTable:
    """
    Rows of one experiment kind.

    Columns come first in the kind's fixed order, then any extra keys sorted by name, then ``config_hash``.
    """

    kind: str
    rows: List[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def add(self, row: dict) -> None:
        self.rows.append(dict(row))

    def extend(self, rows: Sequence[dict]) -> None:
        for row in rows:
            self.add(row)

    def columns(self) -> List[str]:
        fixed = KIND_COLUMNS.get(self.kind, [])
        extra = sorted({key for row in self.rows for key in row} - set(fixed) - {'config_hash'})
        return fixed + extra + ['config_hash']

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=self.columns())
        frame['config_hash'] = self.config_hash
        return frame

    def verify(self) -> bool:
        """ True when the stored config hashes to the value recorded in the provenance block. """

        return self.provenance.get('config_hash') == self.config_hash

    def write(self, directory: str, version: str, started: Optional[str] = None) -> str:
        """ Writes ``<kind>.csv`` and ``<kind>.json`` under ``directory``; returns the CSV path. """

        os.makedirs(directory, exist_ok=True)
        csv_path = os.path.join(directory, f'{self.kind}.csv')
        self.to_frame().to_csv(csv_path, index=False, float_format=CSV_FLOAT_FORMAT, encoding='utf-8')

        self.provenance = {'kind': self.kind,
                           'config': self.config,
                           'config_hash': self.config_hash,
                           'version': version,
                           'started': started,
                           'finished': datetime.now(timezone.utc).isoformat()}
        with open(os.path.join(directory, f'{self.kind}.json'), 'w', encoding='utf-8') as f:
            json.dump(self.provenance, f, indent=2, sort_keys=True)

        log.info("wrote %d %s rows to %s", len(self.rows), self.kind, csv_path)
        return csv_path

    @classmethod
    def read(cls, csv_path: str) -> 'ResultTable':
        """
        :raises HromFormatError: unreadable CSV, missing columns or a provenance block that does not match.
        """

        stem, _ = os.path.splitext(csv_path)
        try:
            with open(stem + '.json', encoding='utf-8') as f:
                provenance = json.load(f)
            frame = pd.read_csv(csv_path, encoding='utf-8', float_precision='round_trip')
        except (OSError, ValueError) as e:
            raise HromFormatError(f"{csv_path}: {e}")

        kind = provenance.get('kind')
        missing = [c for c in KIND_COLUMNS.get(kind, []) + ['config_hash'] if c not in frame.columns]
        if kind is None or missing:
            raise HromFormatError(f"{csv_path}: not a {kind} table, missing columns {missing}")

        table = cls(kind, frame.drop(columns=['config_hash']).to_dict('records'), provenance.get('config', {}),
                    provenance)
        if not table.verify() or (frame['config_hash'] != table.config_hash).any():
            raise HromFormatError(f"{csv_path}: config hash does not match its provenance")
        return table


def find_tables(directory: str) -> List[str]:
    """ Result CSV files under ``directory``, sidecar or not, in sorted order; ``latents/`` is not searched. """

    found = []
    for root, dirs, files in os.walk(directory):
        dirs[:] = [d for d in dirs if d != LATENTS_DIR]
        found.extend(os.path.join(root, name) for name in files if name.endswith('.csv'))
    return sorted(found)


def group_tables(tables: Sequence[ResultTable]) -> Dict[str, pd.DataFrame]:
    """ Frames per kind, concatenated in input order. """

    grouped: Dict[str, List[pd.DataFrame]] = {}
    for table in tables:
        grouped.setdefault(table.kind, []).append(table.to_frame())
    return {kind: pd.concat(frames, ignore_index=True) for kind, frames in grouped.items()}


TIMING_COLUMNS = ('wall_ms',)

_SUMMARY_KEYS = {
    'reconstruction': (['variant', 'grid', 'rank'], ['train_error', 'test_error', 'wall_ms']),
    'training': (['variant', 'grid', 'rank', 'epoch'], ['train_loss', 'wall_ms']),
    'koopman': (['variant', 'n_frequencies'], ['frequency_error', 'train_error', 'test_error']),
    'surrogate': (['variant', 'rank'], ['total_error', 'reconstruction_error', 'lstm_error']),
}
_METRIC_KEYS = (['metric', 'variant', 'grid', 'rank', 'noise_level'], ['value'])


def payload(frame: pd.DataFrame) -> pd.DataFrame:
    """ ``frame`` without its timing columns, the part that repeats exactly between identical runs. """

    return frame.drop(columns=[c for c in TIMING_COLUMNS if c in frame.columns])


def summarize(kind: str, frame: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and population std per group of one kind's rows; ``n`` counts the rows of a group.

    Reconstruction summaries get ``log_rank`` and ``log_test_error_mean`` columns for log-log plots.
    """

    keys, values = _SUMMARY_KEYS.get(kind, _METRIC_KEYS)
    keys = [k for k in keys if k in frame.columns]
    values = [v for v in values if v in frame.columns]
    grouped = frame[keys + values].groupby(keys, sort=True, dropna=False)

    out = grouped.size().rename('n').to_frame()
    for column in values:
        out[f'{column}_mean'] = grouped[column].mean()
        out[f'{column}_std'] = grouped[column].std(ddof=0)
    out = out.reset_index()

    if kind == 'reconstruction':
        out['log_rank'] = np.log(out['rank'].astype(float))
        out['log_test_error_mean'] = np.log(out['test_error_mean'].where(out['test_error_mean'] > 0))
    return out


def convergence_rates(summary: pd.DataFrame) -> pd.DataFrame:
    """ Fitted ``q`` of the mean test error per (variant, grid), where at least three positive ranks exist. """

    rows = []
    for (variant, grid), group in summary.groupby(['variant', 'grid'], sort=True):
        group = group[group['test_error_mean'] > 0]
        if len(group) < 3:
            log.info("%s grid %s: fewer than three ranks, no convergence rate", variant, grid)
            continue
        fit = fit_convergence_rate(group['rank'].to_numpy(), group['test_error_mean'].to_numpy())
        rows.append({'variant': variant, 'grid': grid, 'q': fit.q, 'intercept': fit.intercept,
                     'n_ranks': len(group)})
    return pd.DataFrame(rows, columns=['variant', 'grid', 'q', 'intercept', 'n_ranks'])


def report_directory(directory: str, out: Optional[str] = None) -> Tuple[Dict[str, pd.DataFrame], List[str]]:
    """
    Reads every table under ``directory``, aggregates each kind separately and writes ``<kind>_summary.csv``
    (plus ``reconstruction_convergence.csv``) to ``out`` (default: ``directory/summary``).

    :returns: the summaries by name, and the tables that could not be read.
    """

    out = os.path.join(directory, 'summary') if out is None else out
    tables, skipped = [], []
    for path in find_tables(directory):
        if os.path.abspath(os.path.dirname(path)) == os.path.abspath(out):
            continue
        try:
            tables.append(ResultTable.read(path))
        except HromFormatError as e:
            log.warning("skipping %s", e)
            skipped.append(path)

    summaries = {}
    for kind, frame in group_tables(tables).items():
        summaries[f'{kind}_summary'] = summarize(kind, frame)
        if kind == 'reconstruction':
            summaries['reconstruction_convergence'] = convergence_rates(summaries['reconstruction_summary'])

    os.makedirs(out, exist_ok=True)
    for name, frame in summaries.items():
        frame.to_csv(os.path.join(out, f'{name}.csv'), index=False, float_format=CSV_FLOAT_FORMAT, encoding='utf-8')
    return summaries, skipped
