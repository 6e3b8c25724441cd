"""
CSV / JSON-lines artifacts: traces, snapshots, summary records, stability
scans, correlation sums, plus the JSON-lines logging handler.
"""
import csv
import io
import json
import logging
import math
import os
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

_RESERVED = set(vars(logging.LogRecord('', 0, '', 0, '', (), None))) | {'message', 'asctime'}


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def fmt(value: float, digits: int = 17) -> str:
    return f'{float(value):.{digits}g}'


def mode_label(index: Sequence[int]) -> str:
    return '_'.join(str(int(i)) for i in np.atleast_1d(index))


def _traced_positions(trace) -> List[int]:
    if trace.stepper.traced_modes:
        return [int(p) for p in trace.stepper.traced_modes]
    return list(range(trace.basis.size))


def trace_rows(trace) -> Tuple[List[str], List[List[str]]]:
    """Header and rows of the trace CSV (every stride-th step)."""
    positions = _traced_positions(trace)
    terms = trace.taus.shape[1]
    header = ['t'] + [f'tau_{i + 1}' for i in range(terms)] + ['E', 'calE', 'normM']
    for p in positions:
        label = mode_label(trace.basis.indices[p])
        header += [f'u_{label}', f'v_{label}']
    rows = []
    for i in range(0, len(trace), trace.stepper.stride):
        row = [fmt(trace.times[i])] + [fmt(x) for x in trace.taus[i]]
        row += [fmt(trace.energy[i]), fmt(trace.cal_energy[i]), fmt(trace.norm_m[i])]
        for p in positions:
            row += [fmt(trace.u[i, p]), fmt(trace.v[i, p])]
        rows.append(row)
    return header, rows


def write_table(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def write_trace_csv(trace, path: str) -> str:
    header, rows = trace_rows(trace)
    return write_table(path, header, rows)


def write_snapshots(trace, path: str) -> Optional[str]:
    """Full-state text block: a '# t=' line, then 'index u v' per mode."""
    stride = trace.stepper.snapshot_stride
    if stride <= 0:
        return None
    lines = []
    for i in range(0, len(trace), stride):
        lines.append(f'# t={fmt(trace.times[i])}')
        for p in range(trace.basis.size):
            lines.append(f'{mode_label(trace.basis.indices[p])} {fmt(trace.u[i, p])} {fmt(trace.v[i, p])}')
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('\n'.join(lines) + '\n')
    return path


def write_stability_csv(reports, path: str) -> str:
    rows = [[fmt(r.tau, 12), fmt(r.root.real, 12), fmt(r.root.imag, 12)] for r in reports]
    return write_table(path, ['tau', 're_lambda', 'im_lambda'], rows)


def write_correlation_csv(estimate, path: str) -> str:
    rows = [[fmt(r), fmt(c), fmt(s)] for r, c, s in
            zip(estimate.radii, estimate.correlation, estimate.local_slopes)]
    return write_table(path, ['r', 'C_r', 'local_slope'], rows)


def parse_table(text: str) -> Dict[str, Any]:
    """Parse a numeric CSV artifact into {'columns': [...], 'data': ndarray}."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header:
        return {'success': False, 'error': 'Empty CSV file', 'columns': [], 'data': np.zeros((0, 0))}
    rows = [[float(x) for x in row] for row in reader if row]
    return {'success': True, 'columns': header, 'data': np.array(rows).reshape(len(rows), len(header))}


def read_table(path: str) -> Dict[str, Any]:
    with open(path, encoding='utf-8') as handle:
        return parse_table(handle.read())


def record_line(record: Dict[str, Any]) -> str:
    return json.dumps(_plain(record), sort_keys=True)


def write_records(path: str, records: Iterable[Dict[str, Any]]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        for record in records:
            handle.write(record_line(record) + '\n')
    return path


def read_records(path: str) -> List[Dict[str, Any]]:
    with open(path, encoding='utf-8') as handle:
        return [json.loads(line) for line in handle if line.strip()]


class JsonLinesHandler(logging.Handler):
    """One JSON object per log record: ts, level, logger, event and any extras."""

    def __init__(self, path: str, level: int = logging.INFO):
        super().__init__(level)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.path = path

    def emit(self, record: logging.LogRecord) -> None:
        try:
            entry = {
                'ts': datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
                'level': record.levelname,
                'logger': record.name,
                'event': record.getMessage(),
            }
            entry.update({k: v for k, v in vars(record).items() if k not in _RESERVED})
            with open(self.path, 'a', encoding='utf-8') as handle:
                handle.write(record_line(entry) + '\n')
        except Exception:
            self.handleError(record)
