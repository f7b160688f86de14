"""
Small text-table helpers shared by the artifact writers.
"""
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from tidalfarm.errors import TidalFarmError


class TableError(TidalFarmError):
    code = 'io.parse'


def format_float(value) -> str:
    """Shortest decimal text that reads back to the same double."""
    return repr(float(value))


def write_table(path: Union[str, Path], header: str, columns: Sequence[np.ndarray],
                comments: Iterable[str] = ()) -> Path:
    """
    Write whitespace-separated columns of full-precision floats.

    ``header`` and every comment line are written after a ``# `` prefix.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.zeros((0, 0))
    lines = [f"# {c}" for c in comments]
    lines.append(f"# {header}")
    lines.extend(' '.join(format_float(v) for v in row) for row in rows.tolist())
    path.write_text('\n'.join(lines) + '\n')
    return path


def read_table(path: Union[str, Path], columns: int) -> np.ndarray:
    """Read a table written by write_table; raises TableError with the line number."""
    path = Path(path)
    rows = []
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        fields = raw.split('#', 1)[0].split()
        if not fields:
            continue
        if len(fields) != columns:
            raise TableError(f"{path}: line {number}: expected {columns} columns, found {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise TableError(f"{path}: line {number}: invalid number in {raw.strip()!r}")
    return np.array(rows, dtype=float).reshape(-1, columns)


def header_comments(path: Union[str, Path]) -> dict:
    """``key=value`` pairs found in the leading comment lines of a table."""
    found = {}
    for raw in Path(path).read_text().splitlines():
        if not raw.startswith('#'):
            break
        for token in raw[1:].split():
            if '=' in token:
                key, value = token.split('=', 1)
                found[key] = value
    return found
