"""Datasets, CSV ingestion and label transforms.

CSV layout (UTF-8, comma separated, header row required):

    labeled:    [id,] f, y [, fallback]
    unlabeled:  [id,] f [, fallback]

``label_kind`` fixes the domains of ``f`` and ``y``:

    real      f, y real numbers
    binary    f, y in {0, 1}
    abstain3  f in {y, n, u}, y in {0, 1}
    sxs3      f, y in {w, l, t}
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

LABEL_KINDS = ("real", "binary", "abstain3", "sxs3")
ABSTAIN_TOKENS = ("n", "y", "u")
SXS_TOKENS = ("w", "l", "t")
DEFAULT_LINEARIZATION = {"n": 0.0, "y": 1.0, "u": 0.5}
SIGNED_LINEARIZATION = {"n": -1.0, "y": 1.0, "u": 0.0}
LINEARIZATIONS = {"default": DEFAULT_LINEARIZATION, "signed": SIGNED_LINEARIZATION}


class DataValidationError(ValueError):
    def __init__(self, message: str, path=None, row: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if row is not None:
                where += f", row {row}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.row = row


def _domain(kind: str, column: str):
    if kind == "real":
        return "real"
    if kind == "binary":
        return "binary"
    if kind == "abstain3":
        return ABSTAIN_TOKENS if column == "f" else "binary"
    if kind == "sxs3":
        return SXS_TOKENS
    raise ValueError(f"unknown label kind {kind!r}")


def _parse(value: str, domain):
    if domain == "real":
        x = float(value)
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {value!r}")
        return x
    if domain == "binary":
        if value not in ("0", "1"):
            raise ValueError(f"expected 0 or 1, got {value!r}")
        return int(value)
    if value not in domain:
        raise ValueError(f"expected one of {list(domain)}, got {value!r}")
    return value


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _array(values, domain) -> np.ndarray:
    if domain == "real":
        return np.asarray(values, dtype=float)
    if domain == "binary":
        return np.asarray(values, dtype=int)
    return np.asarray(values, dtype=object)


def _check_domain(values: np.ndarray, domain, name: str) -> None:
    if domain == "real":
        ok = np.isfinite(values)
    elif domain == "binary":
        ok = (values == 0) | (values == 1)
    else:
        ok = np.isin(values, np.asarray(domain, dtype=object))
    if not np.all(ok):
        i = int(np.argmin(ok))
        raise DataValidationError(f"{name}[{i}] = {values[i]!r} is outside the label domain")


@dataclass(frozen=True, eq=False)
class Dataset:
    labeled_f: np.ndarray
    labeled_y: np.ndarray
    unlabeled_f: np.ndarray
    label_kind: str
    labeled_ids: Optional[tuple] = None
    unlabeled_ids: Optional[tuple] = None
    labeled_fallback: Optional[np.ndarray] = None
    unlabeled_fallback: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.label_kind not in LABEL_KINDS:
            raise DataValidationError(f"unknown label kind {self.label_kind!r}")
        object.__setattr__(self, "labeled_f",
                           _array(self.labeled_f, _domain(self.label_kind, "f")))
        object.__setattr__(self, "labeled_y",
                           _array(self.labeled_y, _domain(self.label_kind, "y")))
        object.__setattr__(self, "unlabeled_f",
                           _array(self.unlabeled_f, _domain(self.label_kind, "f")))
        for name, column in (("labeled_f", "f"), ("labeled_y", "y"), ("unlabeled_f", "f")):
            _check_domain(getattr(self, name), _domain(self.label_kind, column), name)
        if self.labeled_f.shape != self.labeled_y.shape:
            raise DataValidationError("labeled f and y differ in length")
        if self.n < 1 or self.N < 0:
            raise DataValidationError(f"need n >= 1 labeled rows, got n={self.n}")
        for name in ("labeled_ids", "unlabeled_ids"):
            ids = getattr(self, name)
            if ids is not None:
                object.__setattr__(self, name, tuple(str(i) for i in ids))
        if self.labeled_ids is not None and self.unlabeled_ids is not None:
            overlap = set(self.labeled_ids) & set(self.unlabeled_ids)
            if overlap:
                raise DataValidationError(
                    f"labeled and unlabeled ids overlap, e.g. {sorted(overlap)[0]!r}")

    @property
    def n(self) -> int:
        return int(self.labeled_f.size)

    @property
    def N(self) -> int:
        return int(self.unlabeled_f.size)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            a, b = np.asarray(a), np.asarray(b)
            return a.dtype == b.dtype and a.shape == b.shape and bool(np.all(a == b))
        return (self.label_kind == other.label_kind
                and self.labeled_ids == other.labeled_ids
                and self.unlabeled_ids == other.unlabeled_ids
                and all(same(getattr(self, k), getattr(other, k))
                        for k in ("labeled_f", "labeled_y", "unlabeled_f",
                                  "labeled_fallback", "unlabeled_fallback")))

    __hash__ = None

    def to_dict(self) -> dict:
        def col(a):
            return None if a is None else [v.item() if hasattr(v, "item") else v for v in a]
        return {
            "label_kind": self.label_kind,
            "labeled": {"id": col(self.labeled_ids), "f": col(self.labeled_f),
                        "y": col(self.labeled_y), "fallback": col(self.labeled_fallback)},
            "unlabeled": {"id": col(self.unlabeled_ids), "f": col(self.unlabeled_f),
                          "fallback": col(self.unlabeled_fallback)},
        }


# ---------------------------------------------------------------------- CSV

def _read_part(path, label_kind: str, columns: tuple):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError("missing header row", path) from None
        for c in columns:
            if c not in header:
                raise DataValidationError(f"missing column {c!r}", path, 1)
        pos = {c: header.index(c) for c in header}
        has_id = "id" in pos
        has_fallback = "fallback" in pos
        values = {c: [] for c in columns}
        ids, fallback, seen = [], [], {}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataValidationError(
                    f"expected {len(header)} fields, got {len(row)}", path, row_no)
            for c in columns:
                try:
                    values[c].append(_parse(row[pos[c]].strip(), _domain(label_kind, c)))
                except ValueError as exc:
                    raise DataValidationError(f"column {c!r}: {exc}", path, row_no) from None
            if has_id:
                item = row[pos["id"]].strip()
                if not item:
                    raise DataValidationError("empty id", path, row_no)
                if item in seen:
                    raise DataValidationError(
                        f"duplicate id {item!r} (first seen at row {seen[item]})", path, row_no)
                seen[item] = row_no
                ids.append(item)
            if has_fallback:
                cell = row[pos["fallback"]].strip()
                if cell == "":
                    fallback.append(-1)
                else:
                    try:
                        fallback.append(_parse(cell, "binary"))
                    except ValueError as exc:
                        raise DataValidationError(f"column 'fallback': {exc}",
                                                  path, row_no) from None
    return (values, tuple(ids) if has_id else None,
            np.asarray(fallback, dtype=int) if has_fallback else None)


def load_csv(labeled_path, unlabeled_path, label_kind: str) -> Dataset:
    """Read a labeled CSV (f, y) and an unlabeled CSV (f).

    ``unlabeled_path=None`` yields a pool with an empty unlabeled part, as
    used by the subsampling experiments.
    """
    if label_kind not in LABEL_KINDS:
        raise DataValidationError(f"unknown label kind {label_kind!r}")
    lab, lab_ids, lab_fb = _read_part(labeled_path, label_kind, ("f", "y"))
    if not lab["f"]:
        raise DataValidationError("no labeled rows", labeled_path)
    if unlabeled_path is None:
        return Dataset(lab["f"], lab["y"], [], label_kind, lab_ids,
                       () if lab_ids is not None else None, lab_fb,
                       np.zeros(0, dtype=int) if lab_fb is not None else None)
    unl, unl_ids, unl_fb = _read_part(unlabeled_path, label_kind, ("f",))
    if not unl["f"]:
        raise DataValidationError("no unlabeled rows", unlabeled_path)
    if lab_ids is not None and unl_ids is not None:
        overlap = set(lab_ids) & set(unl_ids)
        if overlap:
            first = min(overlap, key=unl_ids.index)
            raise DataValidationError(f"id {first!r} also appears in the labeled file",
                                      unlabeled_path, unl_ids.index(first) + 2)
    return Dataset(lab["f"], lab["y"], unl["f"], label_kind, lab_ids, unl_ids, lab_fb, unl_fb)


def _write_part(path, ids, columns: dict, fallback):
    header = (["id"] if ids is not None else []) + list(columns)
    if fallback is not None:
        header.append("fallback")
    n = len(next(iter(columns.values())))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(n):
            row = ([ids[i]] if ids is not None else []) + [_format(c[i]) for c in columns.values()]
            if fallback is not None:
                row.append("" if fallback[i] < 0 else str(int(fallback[i])))
            writer.writerow(row)


def write_csv(dataset: Dataset, labeled_path, unlabeled_path) -> None:
    _write_part(labeled_path, dataset.labeled_ids,
                {"f": dataset.labeled_f, "y": dataset.labeled_y}, dataset.labeled_fallback)
    _write_part(unlabeled_path, dataset.unlabeled_ids,
                {"f": dataset.unlabeled_f}, dataset.unlabeled_fallback)


# ---------------------------------------------------------------- transforms

def backoff(dataset: Dataset) -> Dataset:
    """Replace abstentions by the per-record ``fallback`` label.

    Returns a binary dataset with y -> 1 and n -> 0.
    """
    if dataset.label_kind != "abstain3":
        raise DataValidationError(f"backoff needs an abstain3 dataset, got {dataset.label_kind}")

    def convert(f, fallback, part):
        out = np.empty(f.size, dtype=int)
        for i, tok in enumerate(f):
            if tok == "u":
                if fallback is None or fallback[i] < 0:
                    raise DataValidationError(f"{part} record {i} abstains but has no fallback")
                out[i] = fallback[i]
            else:
                out[i] = 1 if tok == "y" else 0
        return out

    return replace(dataset,
                   labeled_f=convert(dataset.labeled_f, dataset.labeled_fallback, "labeled"),
                   unlabeled_f=convert(dataset.unlabeled_f, dataset.unlabeled_fallback,
                                       "unlabeled"),
                   label_kind="binary")


def linearize(dataset: Dataset, mapping: Mapping[str, float] = DEFAULT_LINEARIZATION) -> Dataset:
    """Map token-valued autorater labels to reals; y becomes real as well."""
    if dataset.label_kind in ("real", "binary"):
        raise DataValidationError(f"{dataset.label_kind} dataset has no tokens to linearize")
    if dataset.label_kind == "sxs3":
        raise DataValidationError("side-by-side human labels cannot be linearized")

    def convert(f):
        try:
            return np.array([float(mapping[tok]) for tok in f])
        except KeyError as exc:
            raise DataValidationError(f"token {exc.args[0]!r} has no linearization") from None

    return replace(dataset, labeled_f=convert(dataset.labeled_f),
                   labeled_y=dataset.labeled_y.astype(float),
                   unlabeled_f=convert(dataset.unlabeled_f), label_kind="real")


def discretize(dataset: Dataset, threshold: float = 0.5) -> Dataset:
    """Threshold real scores into a binary autorater (score >= threshold -> 1)."""
    if dataset.label_kind == "binary":
        return dataset
    if dataset.label_kind != "real":
        raise DataValidationError(f"cannot discretize a {dataset.label_kind} dataset")
    y = dataset.labeled_y
    if not np.all((y == 0) | (y == 1)):
        raise DataValidationError("discretizing needs 0/1 human labels")
    return replace(dataset,
                   labeled_f=(dataset.labeled_f >= threshold).astype(int),
                   labeled_y=y.astype(int),
                   unlabeled_f=(dataset.unlabeled_f >= threshold).astype(int),
                   label_kind="binary")


def synthesize_sxs(labels_a: Mapping[str, int], labels_b: Mapping[str, int]) -> dict:
    """Per-id side-by-side outcome from two models' binary ratings.

    (1, 0) -> w, (0, 1) -> l, equal ratings -> t.
    """
    if set(labels_a) != set(labels_b):
        missing = sorted(set(labels_a) ^ set(labels_b))
        raise DataValidationError(f"model label id sets differ, e.g. {missing[0]!r}")
    out = {}
    for key, va in labels_a.items():
        vb = labels_b[key]
        if va not in (0, 1) or vb not in (0, 1):
            raise DataValidationError(f"id {key!r}: labels must be 0/1")
        out[key] = "w" if va > vb else "l" if va < vb else "t"
    return out


def split_pool(pool: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    """Keep ``n`` random labeled rows; the rest contribute only their ``f``."""
    if not 1 <= n <= pool.n:
        raise DataValidationError(f"n={n} outside [1, {pool.n}]")
    perm = rng.permutation(pool.n)
    keep, drop = np.sort(perm[:n]), np.sort(perm[n:])
    unl_f = np.concatenate([pool.labeled_f[drop], pool.unlabeled_f])
    ids = None
    if pool.labeled_ids is not None and pool.unlabeled_ids is not None:
        ids = (tuple(pool.labeled_ids[i] for i in keep),
               tuple(pool.labeled_ids[i] for i in drop) + pool.unlabeled_ids)
    return Dataset(pool.labeled_f[keep], pool.labeled_y[keep], unl_f, pool.label_kind,
                   *(ids or (None, None)))


# --------------------------------------------------------------------- JSON

def report_to_dict(report, cfg) -> dict:
    return {
        "method": report.method,
        "level": report.interval.level,
        "lo": report.interval.lo,
        "hi": report.interval.hi,
        "width": report.interval.width,
        "point_estimate": report.interval.point_estimate,
        "engine": report.interval.engine,
        "T": cfg.T if report.interval.engine != "bootstrap" else cfg.B,
        "seed": cfg.seed,
        "diagnostics": _jsonable(report.diagnostics),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)
