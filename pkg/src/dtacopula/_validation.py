"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numbers

from .data import FORMATS, Dataset, StudyRecord, ValidationError, parse_csv


def check_int(value, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_positive(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_choice(value, choices, name: str) -> str:
    key = str(value).lower()
    if key not in choices:
        raise ValueError(f"{name} must be one of {', '.join(choices)}; got {value!r}")
    return key


def _frame_columns(frame):
    cols = {str(c) for c in frame.columns}
    for fmt, needed in FORMATS.items():
        if set(needed) <= cols:
            return fmt
    if {"tp", "n_diseased", "tn", "n_healthy"} <= cols:
        return "records"
    raise ValidationError(
        "data frame needs columns TP, FP, TN, FN or Dis, TP, NonDis, TN "
        f"(or tp, n_diseased, tn, n_healthy); got {sorted(cols)}"
    )


def check_dataset(X, id_column: str | None = None, covariates=None) -> Dataset:
    """Coerce ``X`` into a :class:`Dataset`.

    Accepts a Dataset, a list of StudyRecord, CSV text or path, or a pandas
    DataFrame in either count layout. Columns other than the counts and the
    id become covariates unless ``covariates`` lists them explicitly.
    """
    if isinstance(X, Dataset):
        return X
    if isinstance(X, (list, tuple)) and X and all(isinstance(r, StudyRecord) for r in X):
        return Dataset.from_records(X)
    if isinstance(X, str):
        fmt = "tp_fp_tn_fn" if "FN" in X.splitlines()[0] else "dis_nondis"
        return parse_csv(X, fmt, id_column or "ID", tuple(covariates or ()))
    if hasattr(X, "columns") and hasattr(X, "itertuples"):
        return _from_frame(X, id_column, covariates)
    raise TypeError(f"cannot interpret {type(X).__name__} as diagnostic accuracy data")


def _from_frame(frame, id_column, covariates) -> Dataset:
    fmt = _frame_columns(frame)
    count_cols = ("tp", "n_diseased", "tn", "n_healthy") if fmt == "records" else FORMATS[fmt]
    cols = [str(c) for c in frame.columns]
    if id_column is None:
        id_column = next((c for c in ("study_id", "StudyID", "ID", "SID") if c in cols), None)
    if covariates is None:
        covariates = [c for c in cols if c not in count_cols and c != id_column]
    records = []
    for i, row in enumerate(frame.to_dict("records")):
        sid = str(row[id_column]) if id_column else str(i + 1)
        c = {k: _as_count(row[k], k, sid) for k in count_cols}
        if fmt == "dis_nondis":
            counts = (c["TP"], c["Dis"], c["TN"], c["NonDis"])
        elif fmt == "tp_fp_tn_fn":
            counts = (c["TP"], c["TP"] + c["FN"], c["TN"], c["TN"] + c["FP"])
        else:
            counts = (c["tp"], c["n_diseased"], c["tn"], c["n_healthy"])
        records.append(StudyRecord(sid, *counts, covariates={k: str(row[k]) for k in covariates}))
    return Dataset.from_records(records)


def _as_count(value, column, sid) -> int:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"study {sid!r}: column {column} is not a number ({value!r})") from None
    if f != f or f < 0 or f != int(f):
        raise ValidationError(f"study {sid!r}: column {column} must be a non-negative integer, got {value!r}")
    return int(f)
