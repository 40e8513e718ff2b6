"""CSV ingestion and the text model format.

Model files look like::

    # hierprox model v1
    p,3
    xmean,0,0.12
    xscale,0,0.98
    ...
    lambda1,lambda2,objective
    4.2,8.4,17.5
    intercept,0.3
    main,1,0.25
    inter,0,1,-0.5
    2.1,4.2,12.25
    ...

Everything above the ``lambda1,lambda2,objective`` header is preprocessing
state. Each entry starts with its three numbers and lists only nonzero
coefficients. Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hierprox.path import FitPath, PathEntry
from hierprox.problem import NONZERO_TOL, Coefficients, DesignData

MAGIC = "# hierprox model"
VERSION = 1
HEADER = "lambda1,lambda2,objective"


class ParseError(ValueError):
    """Malformed CSV input; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ModelFormatError(ValueError):
    def __init__(self, message, line=None, record=None):
        self.line = line
        self.record = record
        where = []
        if record is not None:
            where.append(f"record {record}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def read_table(path):
    """Header names and a float matrix from a numeric CSV file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header is None:
                header = [c.strip() for c in row]
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            vals = []
            for col, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric value {cell.strip()!r} in column {header[col]!r}", lineno) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {cell.strip()!r} in column {header[col]!r}", lineno)
                vals.append(v)
            rows.append(vals)
    if header is None:
        raise ParseError("empty file (no header row)")
    if not rows:
        raise ParseError("no data rows")
    return header, np.array(rows, dtype=np.float64)


def _response_index(header, response_column):
    if isinstance(response_column, int):
        idx = response_column
    elif str(response_column).lstrip("-").isdigit() and str(response_column) not in header:
        idx = int(response_column)
    else:
        if response_column not in header:
            raise ParseError(f"response column {response_column!r} not in header {header}")
        return header.index(response_column)
    if not -len(header) <= idx < len(header):
        raise ParseError(f"response index {idx} out of range for {len(header)} columns")
    return idx % len(header)


def load_arrays(path, response_column="y"):
    """``(X, y, feature_names)``; ``y`` is None when ``response_column`` is None."""
    header, table = read_table(path)
    if response_column is None:
        return table, None, header
    k = _response_index(header, response_column)
    y = table[:, k]
    X = np.delete(table, k, axis=1)
    names = header[:k] + header[k + 1 :]
    if X.shape[1] == 0:
        raise ParseError("no feature columns besides the response")
    return X, y, names


def load_csv(path, response_column="y", standardize=False) -> DesignData:
    """Read a CSV into :class:`DesignData`. With ``standardize`` the data is
    passed through :meth:`DesignData.prepare`; otherwise it is stored raw."""
    X, y, _ = load_arrays(path, response_column)
    if standardize is None:
        return DesignData(X, y)
    return DesignData.prepare(X, y, standardize=standardize) if standardize else DesignData(X, y)


def save_csv(path, X, y, names=None, response_name="y"):
    X = np.asarray(X, dtype=np.float64)
    names = names or [f"x{i}" for i in range(X.shape[1])]
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join([response_name] + list(names)) + "\n")
        for yi, row in zip(np.asarray(y, dtype=np.float64), X):
            fh.write(",".join(repr(float(v)) for v in (yi, *row)) + "\n")


@dataclass
class Preprocessing:
    p: int
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None

    @classmethod
    def from_data(cls, data: DesignData):
        return cls(data.p, data.x_mean, data.x_scale)

    def apply(self, X, y=None) -> DesignData:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise ValueError(f"expected {self.p} feature columns, got {X.shape[1] if X.ndim == 2 else X.shape}")
        if self.x_scale is not None:
            X = (X - self.x_mean) / self.x_scale
        return DesignData(X, np.zeros(X.shape[0]) if y is None else y)


def save_model(path, fit_path: FitPath, prep: Preprocessing):
    r = repr
    lines = [f"{MAGIC} v{VERSION}", f"p,{prep.p}"]
    if prep.x_scale is not None:
        lines += [f"xmean,{i},{r(float(v))}" for i, v in enumerate(prep.x_mean)]
        lines += [f"xscale,{i},{r(float(v))}" for i, v in enumerate(prep.x_scale)]
    lines.append(HEADER)
    for e in fit_path.entries:
        c = e.coef
        lines.append(f"{r(float(e.lambda1))},{r(float(e.lambda2))},{r(float(e.objective))}")
        lines.append(f"intercept,{r(float(c.intercept))}")
        lines += [f"main,{i},{r(float(c.beta[i]))}" for i in np.flatnonzero(c.beta)]
        lines += [f"inter,{i},{j},{r(float(v))}" for (i, j), v in sorted(c.theta.items()) if v != 0.0]
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> tuple[FitPath, Preprocessing]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ModelFormatError("not a hierprox model file", line=1)
    version = lines[0][len(MAGIC) :].strip()
    if version != f"v{VERSION}":
        raise ModelFormatError(f"unsupported model version {version!r} (expected v{VERSION})", line=1)
    p = None
    xmean, xscale = {}, {}
    entries = []
    cur = None
    in_body = False

    def finish():
        if cur is not None:
            lam1, lam2, obj, intercept, beta, theta = cur
            coef = Coefficients(beta, theta, intercept)
            mains, pairs = coef.support(NONZERO_TOL)
            entries.append(PathEntry(lam1, lam2, coef, obj, n_main=len(mains), n_inter=len(pairs)))

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        f = line.split(",")
        rec = len(entries)
        try:
            if not in_body:
                if line == HEADER:
                    if p is None:
                        raise ModelFormatError("missing 'p' line before header", line=lineno)
                    in_body = True
                elif f[0] == "p" and len(f) == 2:
                    p = int(f[1])
                elif f[0] in ("xmean", "xscale") and len(f) == 3:
                    (xmean if f[0] == "xmean" else xscale)[int(f[1])] = float(f[2])
                else:
                    raise ModelFormatError(f"unexpected preamble line {line!r}", line=lineno)
                continue
            if f[0] == "intercept" and len(f) == 2 and cur is not None:
                cur[3] = float(f[1])
            elif f[0] == "main" and len(f) == 3 and cur is not None:
                i = int(f[1])
                if not 0 <= i < p:
                    raise ModelFormatError(f"main index {i} out of range", line=lineno, record=rec)
                cur[4][i] = float(f[2])
            elif f[0] == "inter" and len(f) == 4 and cur is not None:
                i, j = int(f[1]), int(f[2])
                if not 0 <= i < j < p:
                    raise ModelFormatError(f"invalid pair ({i}, {j})", line=lineno, record=rec)
                cur[5][(i, j)] = float(f[3])
            elif len(f) == 3:
                rec = len(entries) + (1 if cur is not None else 0)
                finish()
                cur = [float(f[0]), float(f[1]), float(f[2]), 0.0, np.zeros(p), {}]
            else:
                raise ModelFormatError(f"malformed record line {line!r}", line=lineno, record=rec)
        except ValueError as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(str(exc), line=lineno, record=rec) from None
    if not in_body:
        raise ModelFormatError("missing header line 'lambda1,lambda2,objective'")
    finish()
    prep = Preprocessing(p)
    if xscale:
        if sorted(xscale) != list(range(p)) or sorted(xmean) != list(range(p)):
            raise ModelFormatError("incomplete xmean/xscale block")
        prep.x_mean = np.array([xmean[i] for i in range(p)])
        prep.x_scale = np.array([xscale[i] for i in range(p)])
    return FitPath(entries=entries), prep


def write_diagnostics(path, fit_path: FitPath, include_time=False):
    cols = ["index", "lambda1", "lambda2", "objective", "n_main", "n_inter", "rounds", "pgd_iterations",
            "max_component_vertices", "max_component_edges", "max_components", "status"]
    if include_time:
        cols.append("wall_time")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, e in enumerate(fit_path.entries):
            row = [k, repr(e.lambda1), repr(e.lambda2), repr(e.objective), e.n_main, e.n_inter, e.rounds,
                   e.pgd_iterations, e.max_component_vertices, e.max_component_edges, e.max_components, e.status]
            if include_time:
                row.append(f"{e.wall_time:.6f}")
            w.writerow(row)
