"""Data ingestion and result writing.

Every float written goes through :func:`fmt` (17 significant digits) so
files re-read bit-exactly and reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .graph import read_adjacency
from .tensor import read_array

COUNTS_HEADER = ["cancer", "area", "year", "count", "population"]


class DataError(ValueError):
    pass


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


# -- ingestion -----------------------------------------------------------------

def _parse_index(raw: str, name: str, lineno: int) -> int:
    try:
        v = int(raw)
    except ValueError:
        raise DataError(f"line {lineno}: {name} index {raw!r} is not an integer") from None
    if v < 1:
        raise DataError(f"line {lineno}: {name} index {v} must be at least 1")
    return v


def load_counts(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Read ``cancer,area,year,count,population`` rows into ``(y, h)``.

    ``y`` is ``m_C x m_S x m_T``; ``h`` is ``m_S x m_T`` and must agree across
    cancers. Every cell must appear exactly once.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read counts file {path}: {exc.strerror}") from exc
    if not rows or [c.strip() for c in rows[0]] != COUNTS_HEADER:
        raise DataError(f"counts file must start with header {','.join(COUNTS_HEADER)}")
    cells: dict[tuple[int, int, int], tuple[int, float]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise DataError(f"line {lineno}: expected 5 fields, got {len(row)}")
        c, s, t = (_parse_index(row[k].strip(), COUNTS_HEADER[k], lineno) for k in range(3))
        key = (c, s, t)
        if key in cells:
            raise DataError(f"duplicate cell (cancer={c}, area={s}, year={t}) at line {lineno}")
        try:
            count_f = float(row[3])
        except ValueError:
            count_f = math.nan
        if not math.isfinite(count_f) or count_f != int(count_f) or count_f < 0:
            raise DataError(f"count {row[3].strip()!r} at (cancer={c}, area={s}, year={t}) "
                            "is not a non-negative integer")
        try:
            pop = float(row[4])
        except ValueError:
            pop = math.nan
        if not (pop > 0 and math.isfinite(pop)):
            raise DataError(f"population {row[4].strip()!r} at (cancer={c}, area={s}, year={t}) "
                            "must be positive")
        cells[key] = (int(count_f), pop)
    if not cells:
        raise DataError("counts file has no data rows")
    mC = max(k[0] for k in cells)
    mS = max(k[1] for k in cells)
    mT = max(k[2] for k in cells)
    y = np.zeros((mC, mS, mT))
    h = np.full((mS, mT), np.nan)
    for c in range(1, mC + 1):
        for s in range(1, mS + 1):
            for t in range(1, mT + 1):
                if (c, s, t) not in cells:
                    raise DataError(f"missing cell (cancer={c}, area={s}, year={t})")
                count, pop = cells[(c, s, t)]
                y[c - 1, s - 1, t - 1] = count
                if np.isnan(h[s - 1, t - 1]):
                    h[s - 1, t - 1] = pop
                elif h[s - 1, t - 1] != pop:
                    raise DataError(f"population at (cancer={c}, area={s}, year={t}) differs from "
                                    "other cancers in the same area and year")
    return y, h


def load_surveillance(counts_path: str | os.PathLike, adjacency_path: str | os.PathLike):
    from .spatiotemporal import SurveillanceData

    y, h = load_counts(counts_path)
    try:
        W = read_adjacency(adjacency_path)
        return SurveillanceData(y, h, W)
    except OSError as exc:
        raise DataError(f"cannot read adjacency file {adjacency_path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def load_array(path: str | os.PathLike) -> np.ndarray:
    try:
        return read_array(path)
    except OSError as exc:
        raise DataError(f"cannot read array file {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_counts(path: str | os.PathLike, y: np.ndarray, h: np.ndarray) -> None:
    mC, mS, mT = y.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(COUNTS_HEADER) + "\n")
        for c in range(mC):
            for s in range(mS):
                for t in range(mT):
                    fh.write(f"{c + 1},{s + 1},{t + 1},{int(y[c, s, t])},{fmt(h[s, t])}\n")


# -- output writers --------------------------------------------------------------

def write_matrix_csv(path: str | os.PathLike, M: np.ndarray) -> None:
    """Square matrix with 1-based row and column labels."""
    M = np.atleast_2d(M)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("," + ",".join(str(j + 1) for j in range(M.shape[1])) + "\n")
        for i, row in enumerate(M):
            fh.write(f"{i + 1}," + ",".join(fmt(v) for v in row) + "\n")


def write_table_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


def trace_groups(traces: Mapping[str, np.ndarray]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for name in traces:
        groups.setdefault(name.split("[", 1)[0], []).append(name)
    return groups


def write_traces(out_dir: Path, chain_traces: Sequence[tuple[np.ndarray, Mapping[str, np.ndarray]]]) -> list[str]:
    """One ``trace_<group>.csv`` per parameter group with rows
    ``chain,iteration,parameter,value``. ``chain_traces`` holds
    ``(iterations, traces)`` per chain, in chain order."""
    names: dict[str, list[str]] = {}
    for _, traces in chain_traces:
        for g, members in trace_groups(traces).items():
            names.setdefault(g, [])
            for m in members:
                if m not in names[g]:
                    names[g].append(m)
    written = []
    for group, members in names.items():
        fname = f"trace_{group}.csv"
        with open(out_dir / fname, "w", encoding="utf-8") as fh:
            fh.write("chain,iteration,parameter,value\n")
            for chain, (iters, traces) in enumerate(chain_traces):
                for k, it in enumerate(iters):
                    for name in members:
                        if name in traces:
                            label = f'"{name}"' if "," in name else name
                            fh.write(f"{chain},{int(it)},{label},{fmt(traces[name][k])}\n")
        written.append(fname)
    return written


def read_traces(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read a trace csv back into per-parameter arrays (chains concatenated in order)."""
    out: dict[str, list[float]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty trace file")
            header = [h.strip() for h in header]
            if header[-2:] != ["parameter", "value"]:
                raise DataError(f"{path}: trace files need 'parameter' and 'value' columns")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    out.setdefault(row[-2], []).append(float(row[-1]))
                except (ValueError, IndexError):
                    raise DataError(f"{path}: line {lineno}: malformed trace row") from None
    except OSError as exc:
        raise DataError(f"cannot read trace file {path}: {exc.strerror}") from exc
    return {k: np.array(v) for k, v in out.items()}


def _json_value(obj: Any, indent: int) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {_json_str(str(k))}: {_json_value(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json_value(v, indent + 1) for v in seq) + "]"
        items = [pad + "  " + _json_value(v, indent + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return _json_str(str(obj))


def _json_str(s: str) -> str:
    return json.dumps(s)


def write_json(path: str | os.PathLike, obj: Any) -> None:
    """JSON with floats at 17 significant digits; non-finite floats become null."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_json_value(obj, 0) + "\n")
