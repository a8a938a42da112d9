"""CSV and configuration I/O.

Fields are stored as ``t,r,value`` rows ordered by time then radius, time
profiles as ``t,value`` and diagnostics as ``key,value``. Every file has one
header row, ``.`` as decimal separator and ``\\n`` line endings. Floats are
written with ``%.17g`` so that a round trip is exact. Writes go to a
temporary file in the target directory that is renamed into place.
"""

from __future__ import annotations

import configparser
import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, DataError
from .forward import SpaceTimeField
from .grid import RadialGrid, TimeGrid

__all__ = [
    "format_float",
    "atomic_write_text",
    "write_field",
    "read_field",
    "write_profile",
    "read_profile",
    "write_key_values",
    "read_key_values",
    "load_config",
]


def format_float(x: float) -> str:
    return "%.17g" % float(x)


def _format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def _rows_to_text(header: Iterable[str], rows: Iterable[Iterable[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_field(path, fld: SpaceTimeField) -> Path:
    t = fld.tgrid.nodes
    r = fld.grid.nodes
    rows = (
        (format_float(t[i]), format_float(r[j]), format_float(fld.values[i, j]))
        for i in range(t.size)
        for j in range(r.size)
    )
    return atomic_write_text(path, _rows_to_text(("t", "r", "value"), rows))


def _read_rows(path, header: tuple[str, ...]) -> list[list[str]]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != header:
        raise DataError(f"{path}: expected header {','.join(header)}")
    body = rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
    return body


def _floats(path, rows, cols) -> np.ndarray:
    try:
        return np.array([[float(row[c]) for c in cols] for row in rows], dtype=float).reshape(len(rows), len(cols))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _uniform_nodes(path, values: np.ndarray, what: str) -> tuple[float, float, int]:
    if values.size < 2:
        raise DataError(f"{path}: need at least two {what} nodes")
    steps = np.diff(values)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise DataError(f"{path}: {what} nodes are not uniform and increasing")
    return float(values[0]), float(values[-1]), int(values.size)


def read_field(path) -> SpaceTimeField:
    """Parse a ``t,r,value`` file; the grids are inferred and must be uniform."""
    rows = _read_rows(path, ("t", "r", "value"))
    data = _floats(path, rows, (0, 1, 2))
    t_unique = np.unique(data[:, 0])
    r_unique = np.unique(data[:, 1])
    nt, nr = t_unique.size, r_unique.size
    if data.shape[0] != nt * nr:
        raise DataError(f"{path}: {data.shape[0]} rows do not form a {nt} x {nr} grid")
    tt = data[:, 0].reshape(nt, nr)
    rr = data[:, 1].reshape(nt, nr)
    if not (np.all(tt == t_unique[:, None]) and np.all(rr == r_unique[None, :])):
        raise DataError(f"{path}: rows must be ordered by t, then r")
    t0, t1, _ = _uniform_nodes(path, t_unique, "time")
    if t0 != 0.0:
        raise DataError(f"{path}: time must start at 0")
    r0, r1, _ = _uniform_nodes(path, r_unique, "radial")
    grid = RadialGrid(r0, r1, nr)
    tgrid = TimeGrid(t1, nt - 1)
    return SpaceTimeField(grid, tgrid, data[:, 2].reshape(nt, nr))


def write_profile(path, tgrid: TimeGrid, values) -> Path:
    values = np.asarray(values, dtype=float)
    rows = ((format_float(t), format_float(v)) for t, v in zip(tgrid.nodes, values))
    return atomic_write_text(path, _rows_to_text(("t", "value"), rows))


def read_profile(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _read_rows(path, ("t", "value"))
    data = _floats(path, rows, (0, 1))
    return data[:, 0], data[:, 1]


def write_key_values(path, items: Mapping[str, object]) -> Path:
    rows = ((str(k), _format_value(v)) for k, v in items.items())
    return atomic_write_text(path, _rows_to_text(("key", "value"), rows))


def read_key_values(path) -> dict[str, str]:
    return {row[0]: row[1] for row in _read_rows(path, ("key", "value"))}


def load_config(path: str | os.PathLike | None = None, text: str | None = None) -> configparser.ConfigParser:
    """Read an INI-style file; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path) as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config: {exc}") from exc
    return parser
