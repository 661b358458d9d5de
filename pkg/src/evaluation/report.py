from pathlib import Path
from typing import Dict, List, Sequence

import pandas as pd

from src.utils.errors import MalformedSequenceError
from src.utils.misc import IoMisc, LoggerMisc

__all__ = [
    'DEPTH_TABLE_COLUMNS',
    'ATE_TABLE_COLUMNS',
    'MATCHING_TABLE_COLUMNS',
    'write_report',
    'read_report',
    'report_table',
    'write_table',
    ]

DEPTH_TABLE_COLUMNS = ['abs_rel', 'sq_rel', 'rmse', 'rmse_log', 'delta1', 'delta2', 'delta3']
ATE_TABLE_COLUMNS = ['rmse', 'std']
MATCHING_TABLE_COLUMNS = ['precision', 'recall']


def write_report(path, report: Dict):
    """Flat key=value lines in insertion order."""
    with IoMisc.atomic_write(path) as f:
        f.write(LoggerMisc.key_value_block(report))


def read_report(path) -> Dict[str, str]:
    path = Path(path)
    report = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if '=' not in line:
            raise MalformedSequenceError(path, f'line {line_no}: expected key=value')
        key, value = line.split('=', 1)
        report[key.strip()] = value.strip()
    return report


def report_table(rows: List[Dict], columns: Sequence[str], index=None) -> pd.DataFrame:
    """Rows restricted to `columns` in that order; `index` names an optional leading column."""
    table = pd.DataFrame(rows)
    ordered = ([index] if index else []) + list(columns)
    return table.reindex(columns=ordered)


def write_table(path, table: pd.DataFrame, sep='\t'):
    with IoMisc.atomic_write(path) as f:
        table.to_csv(f, sep=sep, index=False, float_format='%.9g', na_rep='undefined')
