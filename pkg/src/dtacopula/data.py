"""Diagnostic accuracy datasets: parsing, validation and design matrices."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Base class for dataset problems."""


class SchemaError(DataError):
    """A required column is missing."""


class ValidationError(DataError):
    """Counts violate the study record invariants."""


class ParseError(DataError):
    """A count cell could not be read as a non-negative integer."""


@dataclass(frozen=True)
class StudyRecord:
    study_id: str
    tp: int
    n_diseased: int
    tn: int
    n_healthy: int
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = []
        if self.n_diseased < 1:
            problems.append("n_diseased must be >= 1")
        if self.n_healthy < 1:
            problems.append("n_healthy must be >= 1")
        if not 0 <= self.tp <= self.n_diseased:
            problems.append(f"tp={self.tp} outside [0, n_diseased={self.n_diseased}]")
        if not 0 <= self.tn <= self.n_healthy:
            problems.append(f"tn={self.tn} outside [0, n_healthy={self.n_healthy}]")
        if problems:
            raise ValidationError(f"study {self.study_id!r}: " + "; ".join(problems))

    @property
    def fp(self) -> int:
        return self.n_healthy - self.tn

    @property
    def fn(self) -> int:
        return self.n_diseased - self.tp


@dataclass(frozen=True)
class Dataset:
    records: tuple
    covariate_levels: dict
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.records) < 2:
            raise ValidationError("a dataset needs at least 2 studies")
        keys = set(self.records[0].covariates)
        seen = set()
        for rec in self.records:
            if set(rec.covariates) != keys:
                raise ValidationError(f"study {rec.study_id!r} has covariates {sorted(rec.covariates)}, expected {sorted(keys)}")
            cell = (rec.study_id,) + tuple(rec.covariates[k] for k in sorted(keys))
            if cell in seen:
                raise ValidationError(f"duplicate study id {rec.study_id!r} within covariate cell")
            seen.add(cell)

    @classmethod
    def from_records(cls, records, name: str = "") -> "Dataset":
        records = list(records)
        levels = {}
        if records:
            for key in records[0].covariates:
                levels[key] = tuple(dict.fromkeys(r.covariates.get(key) for r in records))
        return cls(records, levels, name)

    def __len__(self):
        return len(self.records)

    @property
    def tp(self):
        return np.array([r.tp for r in self.records])

    @property
    def n_diseased(self):
        return np.array([r.n_diseased for r in self.records])

    @property
    def tn(self):
        return np.array([r.tn for r in self.records])

    @property
    def n_healthy(self):
        return np.array([r.n_healthy for r in self.records])

    @property
    def study_ids(self) -> list:
        return [r.study_id for r in self.records]

    def counts(self):
        """Return (successes, trials) as n x 2 arrays: column 0 sensitivity, 1 specificity."""
        k = np.column_stack([self.tp, self.tn])
        n = np.column_stack([self.n_diseased, self.n_healthy])
        return k, n

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "covariate_levels": {k: list(v) for k, v in self.covariate_levels.items()},
            "records": [
                {
                    "study_id": r.study_id,
                    "tp": r.tp,
                    "n_diseased": r.n_diseased,
                    "tn": r.tn,
                    "n_healthy": r.n_healthy,
                    "covariates": dict(r.covariates),
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        recs = [StudyRecord(**r) for r in d["records"]]
        levels = {k: tuple(v) for k, v in d.get("covariate_levels", {}).items()}
        return cls(recs, levels, d.get("name", ""))

    def fingerprint(self) -> str:
        payload = self.to_dict()
        payload.pop("name")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_frame(self):
        import pandas as pd

        rows = []
        for r in self.records:
            row = {"study_id": r.study_id, "tp": r.tp, "n_diseased": r.n_diseased, "tn": r.tn, "n_healthy": r.n_healthy}
            row.update(r.covariates)
            rows.append(row)
        return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# CSV

FORMATS = {
    "dis_nondis": ("Dis", "TP", "NonDis", "TN"),
    "tp_fp_tn_fn": ("TP", "FP", "TN", "FN"),
}


def _to_count(raw: str, column: str, line: int) -> int:
    text = raw.strip()
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"row {line}: column {column!r} value {raw!r} is not an integer count") from None
    if value < 0:
        raise ValidationError(f"row {line}: column {column!r} has negative count {value}")
    return value


def parse_csv(path_or_text, format: str = "dis_nondis", id_column: str = "ID", covariate_columns=()) -> Dataset:
    """Read a comma-separated table into a canonical :class:`Dataset`.

    ``path_or_text`` is a filesystem path or the CSV text itself (anything
    containing a newline is treated as text).
    """
    if format not in FORMATS:
        raise DataError(f"unknown format {format!r}; expected one of {sorted(FORMATS)}")
    name = ""
    if isinstance(path_or_text, os.PathLike) or ("\n" not in str(path_or_text)):
        with open(path_or_text, newline="", encoding="utf-8") as fh:
            text = fh.read()
        name = os.path.splitext(os.path.basename(str(path_or_text)))[0]
    else:
        text = str(path_or_text)
    reader = csv.DictReader(io.StringIO(text), skipinitialspace=True)
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    needed = [id_column, *FORMATS[format], *covariate_columns]
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(f"missing column(s) {missing}; header is {header}")

    records = []
    for line, row in enumerate(reader, start=2):
        if not any((v or "").strip() for v in row.values()):
            continue
        c = {col: _to_count(row[col] or "", col, line) for col in FORMATS[format]}
        if format == "dis_nondis":
            tp, nd, tn, nh = c["TP"], c["Dis"], c["TN"], c["NonDis"]
        else:
            tp, tn = c["TP"], c["TN"]
            nd, nh = c["TP"] + c["FN"], c["TN"] + c["FP"]
        covs = {k: row[k].strip() for k in covariate_columns}
        try:
            records.append(StudyRecord(row[id_column].strip(), tp, nd, tn, nh, covs))
        except ValidationError as exc:
            raise ValidationError(f"row {line}: {exc}") from None
    return Dataset.from_records(records, name=name)


def to_csv(dataset: Dataset, format: str = "tp_fp_tn_fn", id_column: str = "StudyID") -> str:
    covs = list(dataset.covariate_levels)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(covs + [id_column, *FORMATS[format]])
    for r in dataset.records:
        if format == "dis_nondis":
            counts = [r.n_diseased, r.tp, r.n_healthy, r.tn]
        else:
            counts = [r.tp, r.fp, r.tn, r.fn]
        w.writerow([r.covariates[k] for k in covs] + [r.study_id, *counts])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# built-in datasets

_TELOMERASE = [
    # ID Dis TP NonDis TN
    ("1", 33, 25, 26, 25),
    ("2", 21, 17, 14, 11),
    ("3", 104, 88, 47, 31),
    ("4", 26, 16, 83, 80),
    ("5", 57, 40, 138, 137),
    ("6", 47, 38, 30, 24),
    ("7", 42, 23, 12, 12),
    ("8", 33, 27, 20, 18),
    ("9", 17, 14, 32, 29),
    ("10", 44, 37, 29, 7),
]

_ASCUS = [
    # Test StudyID TP FP TN FN
    ("RepC", "Andersson 2005", 6, 14, 28, 4),
    ("RepC", "Bergeron 2000", 8, 28, 71, 4),
    ("RepC", "Del Mistro 2010", 20, 191, 483, 7),
    ("RepC", "Kulasingam 2002", 20, 74, 170, 6),
    ("RepC", "Lytwyn 2000", 4, 20, 26, 2),
    ("RepC", "Manos 1999", 48, 324, 570, 15),
    ("RepC", "Monsonego 2008", 10, 18, 168, 15),
    ("RepC", "Morin 2001", 14, 126, 214, 5),
    ("RepC", "Silverloo 2009", 24, 43, 105, 10),
    ("RepC", "Solomon 2001", 227, 1132, 914, 40),
    ("HC2", "Andersson 2005", 6, 17, 25, 4),
    ("HC2", "Bergeron 2000", 10, 38, 61, 2),
    ("HC2", "Del Mistro 2010", 27, 154, 566, 2),
    ("HC2", "Kulasingam 2002", 23, 115, 129, 3),
    ("HC2", "Lytwyn 2000", 4, 19, 33, 1),
    ("HC2", "Manos 1999", 58, 326, 582, 7),
    ("HC2", "Monsonego 2008", 22, 110, 72, 2),
    ("HC2", "Morin 2001", 17, 88, 253, 2),
    ("HC2", "Silverloo 2009", 34, 65, 81, 2),
    ("HC2", "Solomon 2001", 256, 1050, 984, 11),
]

BUILTIN_NAMES = ("telomerase", "ascus")


def builtin_dataset(name: str) -> Dataset:
    """Return one of the bundled example datasets (``telomerase`` or ``ascus``)."""
    key = str(name).lower()
    if key == "telomerase":
        recs = [StudyRecord(i, tp, dis, tn, nondis) for i, dis, tp, nondis, tn in _TELOMERASE]
        return Dataset.from_records(recs, name="telomerase")
    if key == "ascus":
        recs = [
            StudyRecord(sid, tp, tp + fn, tn, tn + fp, {"Test": test})
            for test, sid, tp, fp, tn, fn in _ASCUS
        ]
        return Dataset.from_records(recs, name="ascus")
    raise KeyError(f"unknown builtin dataset {name!r}; available: {', '.join(BUILTIN_NAMES)}")


# ---------------------------------------------------------------------------
# design matrices


@dataclass(frozen=True)
class DesignMatrix:
    rows: np.ndarray
    column_names: tuple
    coding: str  # "intercept" | "cell-means"
    covariate: str | None = None

    @property
    def shape(self):
        return self.rows.shape

    def cells(self):
        """Index of the (single) active column per row."""
        return np.argmax(self.rows, axis=1)


def parse_formula(formula: str) -> tuple[str, str | None]:
    """``"intercept"`` or ``"cellmeans:COV"`` (also ``"COV + 0"``)."""
    text = str(formula).strip()
    if text in ("", "1", "intercept"):
        return "intercept", None
    if text.startswith("cellmeans:") or text.startswith("cell_means:"):
        return "cell-means", text.split(":", 1)[1].strip()
    if text.endswith("+ 0") or text.endswith("+0"):
        return "cell-means", text.rsplit("+", 1)[0].split("~")[-1].strip()
    raise ValueError(f"unrecognised formula {formula!r}; use 'intercept' or 'cellmeans:<covariate>'")


def design_matrix(dataset: Dataset, formula: str = "intercept") -> DesignMatrix:
    coding, cov = parse_formula(formula)
    n = len(dataset)
    if coding == "intercept":
        return DesignMatrix(np.ones((n, 1)), ("(Intercept)",), "intercept")
    if cov not in dataset.covariate_levels:
        raise DataError(f"unknown covariate {cov!r}; available: {sorted(dataset.covariate_levels)}")
    levels = dataset.covariate_levels[cov]
    if len(levels) < 2:
        raise DataError(f"covariate {cov!r} has a single level; cell-means coding needs at least 2")
    rows = np.zeros((n, len(levels)))
    index = {lvl: j for j, lvl in enumerate(levels)}
    for i, rec in enumerate(dataset.records):
        rows[i, index[rec.covariates[cov]]] = 1.0
    return DesignMatrix(rows, tuple(levels), "cell-means", cov)
