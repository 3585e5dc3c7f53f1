"""CSV ingestion for binary classification tables."""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from .errors import DataError
from .forest import Dataset

log = logging.getLogger(__name__)

MISSING_MARKERS = ["", "?"]


def _encode_column(col: pd.Series) -> np.ndarray:
    """Numeric columns pass through; anything else gets codes by first appearance."""
    numeric = pd.to_numeric(col, errors="coerce")
    if not numeric.isna().any():
        return numeric.to_numpy(dtype=float)
    codes, _ = pd.factorize(col, sort=False)
    return codes.astype(float)


def load_dataset(path, label_column=None, positive_label=None, classes=None) -> Dataset:
    """Read a headed CSV into a :class:`Dataset` with labels in {-1, +1}.

    Rows with any missing cell (empty or ``?``) are dropped. The label column
    defaults to the last one. ``classes`` keeps only rows whose label is in
    the given collection, which turns a multi-class table into a binary task
    (e.g. letters A and B). Without ``positive_label`` the first label seen
    becomes +1.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=MISSING_MARKERS,
                         skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if df.shape[1] < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    if label_column is None:
        label_column = df.columns[-1]
    elif label_column not in df.columns:
        raise DataError(f"{path}: no column named {label_column!r}; columns are {list(df.columns)}")

    n_before = len(df)
    df = df.dropna(axis=0, how="any")
    dropped = n_before - len(df)
    if dropped:
        log.warning("%s: dropped %d of %d rows with missing values", path, dropped, n_before)

    labels = df[label_column].str.strip()
    if classes is not None:
        keep = labels.isin([str(c) for c in classes])
        df, labels = df[keep], labels[keep]
    if len(df) == 0:
        raise DataError(f"{path}: no rows left after filtering")

    distinct = list(pd.unique(labels))
    if len(distinct) != 2:
        raise DataError(f"{path}: label column {label_column!r} must have exactly two values, found {distinct}")
    pos = distinct[0] if positive_label is None else str(positive_label)
    if pos not in distinct:
        raise DataError(f"{path}: positive label {pos!r} not among labels {distinct}")
    y = np.where(labels.to_numpy() == pos, 1, -1)

    feats = df.drop(columns=[label_column])
    X = np.column_stack([_encode_column(feats[c]) for c in feats.columns])
    return Dataset(X, y, tuple(str(c) for c in feats.columns))
