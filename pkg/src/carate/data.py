"""Experiment tables: container, CSV ingestion, strata bookkeeping, validation."""

from __future__ import annotations

import csv
import fnmatch
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Input data violates the contract of the estimators."""


@dataclass(frozen=True)
class Dataset:
    """Observed experiment: outcome ``y``, treatment ``a``, stratum ``s`` and covariates ``x``.

    Stratum labels are stored as strings; ``x`` is always two-dimensional
    (``n x k`` with ``k`` possibly zero).
    """

    y: np.ndarray
    a: np.ndarray
    s: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=float).reshape(-1)
        a_raw = np.asarray(self.a)
        s = np.asarray(self.s).astype(str).reshape(-1)
        n = y.shape[0]
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size else np.empty((n, 0))
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if a_raw.reshape(-1).shape[0] != n or s.shape[0] != n or x.shape[0] != n:
            raise DataError("columns y, a, s, x must have identical length")
        if not np.all(np.isin(a_raw, (0, 1))):
            raise DataError("treatment not binary: every a_i must be 0 or 1")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DataError("outcome and covariates must be finite")
        a = a_raw.astype(np.int8).reshape(-1)
        names = tuple(self.covariate_names) or tuple(f"X{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError("covariate_names length does not match x")
        for arr in (y, a, s, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.a[rows], self.s[rows], self.x[rows], self.covariate_names)

    def with_y(self, y) -> "Dataset":
        return Dataset(y, self.a, self.s, self.x, self.covariate_names)

    def with_x(self, x, names: Sequence[str] = ()) -> "Dataset":
        return Dataset(self.y, self.a, self.s, x, tuple(names))


@dataclass(frozen=True)
class StrataIndex:
    """Row bookkeeping per stratum and per (treatment, stratum) cell.

    ``labels`` is sorted lexicographically; ``rows[s]`` and ``arm_rows[(a, s)]``
    are ascending row ids.
    """

    n: int
    labels: tuple[str, ...]
    rows: Mapping[str, np.ndarray]
    arm_rows: Mapping[tuple[int, str], np.ndarray]

    def n_s(self, s: str) -> int:
        return int(self.rows[s].shape[0])

    def n_as(self, a: int, s: str) -> int:
        return int(self.arm_rows[(a, s)].shape[0])

    def p_hat(self, s: str) -> float:
        return self.n_s(s) / self.n

    def pi_hat(self, s: str) -> float:
        return self.n_as(1, s) / self.n_s(s)


def build_index(d: Dataset) -> StrataIndex:
    labels, codes = np.unique(d.s, return_inverse=True)
    rows = {}
    arm_rows = {}
    for j, lab in enumerate(labels):
        lab = str(lab)
        members = np.flatnonzero(codes == j)
        rows[lab] = members
        arm = d.a[members]
        arm_rows[(1, lab)] = members[arm == 1]
        arm_rows[(0, lab)] = members[arm == 0]
    return StrataIndex(n=d.n, labels=tuple(str(v) for v in labels), rows=rows, arm_rows=arm_rows)


@dataclass(frozen=True)
class CellStatus:
    a: int
    s: str
    n_as: int
    estimable: bool
    reason: str = ""


@dataclass(frozen=True)
class ValidationReport:
    k: int
    cells: tuple[CellStatus, ...]
    dropped: tuple[str, ...] = ()
    failing: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        """True when every retained stratum supports the adjusted estimator."""
        return not self.failing

    def lines(self) -> list[str]:
        out = []
        for c in self.cells:
            flag = "ok" if c.estimable else f"NOT ESTIMABLE ({c.reason})"
            out.append(f"stratum={c.s} a={c.a} n={c.n_as}: {flag}")
        if self.dropped:
            out.append("dropped strata: " + ", ".join(self.dropped))
        return out


def validate(
    d: Dataset,
    idx: StrataIndex,
    min_arm_size: int | None = None,
    drop_small_strata: bool = False,
) -> ValidationReport:
    """Check that every (a, s) cell supports the saturated regression.

    A cell is estimable iff ``n_{a,s} >= k + 2`` and the stratum has both
    treated and control units.  ``min_arm_size`` raises the floor (never
    lowers it below ``k + 2``).  With ``drop_small_strata`` the failing strata
    are listed in ``dropped`` instead of ``failing``; nothing is removed
    silently, the caller applies :func:`drop_strata`.
    """
    floor = d.k + 2 if min_arm_size is None else max(int(min_arm_size), d.k + 2)
    cells = []
    bad = []
    for s in idx.labels:
        pi = idx.pi_hat(s)
        for a in (1, 0):
            n_as = idx.n_as(a, s)
            if pi == 1.0 and a == 0:
                reason = "no control units"
            elif pi == 0.0 and a == 1:
                reason = "no treated units"
            elif n_as < floor:
                reason = "n_{a,s} < k+2" if floor == d.k + 2 else f"n_{{a,s}} < {floor}"
            else:
                reason = ""
            cells.append(CellStatus(a, s, n_as, not reason, reason))
            if reason and s not in bad:
                bad.append(s)
    if drop_small_strata:
        return ValidationReport(d.k, tuple(cells), dropped=tuple(bad))
    return ValidationReport(d.k, tuple(cells), failing=tuple(bad))


def drop_strata(d: Dataset, labels: Sequence[str]) -> Dataset:
    keep = ~np.isin(d.s, np.asarray(labels, dtype=str))
    if not keep.any():
        raise DataError("dropping the requested strata leaves no observations")
    return d.subset(np.flatnonzero(keep))


def _select_covariates(header: Sequence[str], spec: str | Sequence[str] | None, reserved: set[str]) -> list[str]:
    if spec is None or spec == "" or spec == []:
        return []
    patterns = [p.strip() for p in spec.split(",")] if isinstance(spec, str) else list(spec)
    chosen: list[str] = []
    for pat in patterns:
        if any(ch in pat for ch in "*?["):
            hits = [h for h in header if fnmatch.fnmatchcase(h, pat) and h not in reserved]
            if not hits:
                raise DataError(f"covariate pattern {pat!r} matches no column")
        elif pat in header:
            hits = [pat]
        else:
            raise DataError(f"missing column {pat!r}")
        chosen.extend(h for h in hits if h not in chosen)
    return chosen


def _parse_float(cell: str, col: str, lineno: int) -> float:
    txt = cell.strip()
    if txt == "" or txt.upper() in ("NA", "NAN", "NULL"):
        raise DataError(f"missing value in column {col!r} at line {lineno}")
    try:
        val = float(txt)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} in column {col!r} at line {lineno}") from None
    if not math.isfinite(val):
        raise DataError(f"non-finite value in column {col!r} at line {lineno}")
    return val


def load_dataset(
    path: str | Path,
    y: str = "Y",
    a: str = "A",
    s: str = "S",
    x: str | Sequence[str] | None = None,
) -> Dataset:
    """Read a comma-delimited UTF-8 CSV with a header row.

    ``x`` is an explicit list of covariate columns, a comma-separated string,
    or glob patterns such as ``"X*"``.  ``None`` means no covariates.
    Blank/NA cells are errors; there is no imputation.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            body = [row for row in reader if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    for col in (y, a, s):
        if col not in header:
            raise DataError(f"missing column {col!r}")
    xcols = _select_covariates(header, x, {y, a, s})
    pos = {h: i for i, h in enumerate(header)}

    ys, as_, ss, xs = [], [], [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
        ys.append(_parse_float(row[pos[y]], y, lineno))
        aval = _parse_float(row[pos[a]], a, lineno)
        if aval not in (0.0, 1.0):
            raise DataError(f"treatment not binary: {row[pos[a]]!r} at line {lineno}")
        as_.append(int(aval))
        lab = row[pos[s]].strip()
        if lab == "":
            raise DataError(f"missing value in column {s!r} at line {lineno}")
        ss.append(lab)
        xs.append([_parse_float(row[pos[c]], c, lineno) for c in xcols])
    if not ys:
        raise DataError(f"{path}: no data rows")
    xmat = np.array(xs, dtype=float).reshape(len(ys), len(xcols))
    return Dataset(np.array(ys), np.array(as_), np.array(ss), xmat, tuple(xcols))
