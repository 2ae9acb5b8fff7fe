"""Trial data container, CSV ingestion and horizon bookkeeping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DataError

BINARY = "binary"
CONTINUOUS = "continuous"

REQUIRED_COLUMNS = ("treatment", "time", "event")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Observed trial data: covariates X, treatment A, time U = min(T, C), event delta.

    Arrays are copied and marked read-only on construction.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    time: np.ndarray
    event: np.ndarray
    covariate_names: tuple = None
    covariate_kinds: tuple = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim != 2:
            raise DataError(f"covariates must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates contain non-finite values")
        A = np.asarray(self.treatment, dtype=float)
        U = np.asarray(self.time, dtype=float)
        D = np.asarray(self.event, dtype=float)
        for name, v in (("treatment", A), ("time", U), ("event", D)):
            if v.shape != (n,):
                raise DataError(f"{name} has shape {v.shape}, expected ({n},)")
        if not np.all(np.isin(A, (0, 1))):
            raise DataError("treatment values must be 0 or 1")
        if not np.all(np.isin(D, (0, 1))):
            raise DataError("event values must be 0 or 1")
        if not np.all(np.isfinite(U)) or np.any(U < 0):
            raise DataError("time values must be finite and nonnegative")

        names = self.covariate_names
        if names is None:
            names = tuple(f"X{j + 1}" for j in range(p))
        names = tuple(str(s) for s in names)
        if len(names) != p or len(set(names)) != p:
            raise DataError("covariate_names must be p unique labels")
        kinds = self.covariate_kinds
        if kinds is None:
            kinds = infer_kinds(X)
        kinds = tuple(kinds)
        if len(kinds) != p or not set(kinds) <= {BINARY, CONTINUOUS}:
            raise DataError("covariate_kinds must be p tags in {'binary', 'continuous'}")
        for j, k in enumerate(kinds):
            if k == BINARY and not np.all(np.isin(X[:, j], (0, 1))):
                raise DataError(f"column {names[j]!r} tagged binary but has values outside {{0,1}}")

        object.__setattr__(self, "covariates", _frozen(X, float))
        object.__setattr__(self, "treatment", _frozen(A, np.int64))
        object.__setattr__(self, "time", _frozen(U, float))
        object.__setattr__(self, "event", _frozen(D, np.int64))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "covariate_kinds", kinds)
        if self.ids is not None:
            ids = np.asarray(self.ids)
            if ids.shape != (n,):
                raise DataError("ids must have length n")
            object.__setattr__(self, "ids", _frozen(ids, ids.dtype))

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows)
        return Dataset(
            self.covariates[rows],
            self.treatment[rows],
            self.time[rows],
            self.event[rows],
            self.covariate_names,
            self.covariate_kinds,
            None if self.ids is None else self.ids[rows],
        )

    def to_frame(self):
        cols = {}
        if self.ids is not None:
            cols["id"] = self.ids
        cols["treatment"] = self.treatment
        cols["time"] = self.time
        cols["event"] = self.event
        for j, name in enumerate(self.covariate_names):
            col = self.covariates[:, j]
            cols[name] = col.astype(np.int64) if self.covariate_kinds[j] == BINARY else col
        return pd.DataFrame(cols)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_ids = (self.ids is None and other.ids is None) or (
            self.ids is not None
            and other.ids is not None
            and np.array_equal(self.ids.astype(str), other.ids.astype(str))
        )
        return (
            same_ids
            and self.covariate_names == other.covariate_names
            and self.covariate_kinds == other.covariate_kinds
            and np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
        )

    __hash__ = None


def infer_kinds(X):
    X = np.asarray(X, dtype=float)
    return tuple(
        BINARY if np.all(np.isin(X[:, j], (0, 1))) else CONTINUOUS for j in range(X.shape[1])
    )


@dataclass(frozen=True)
class Horizon:
    t_star: float

    def __post_init__(self):
        t = float(self.t_star)
        if not np.isfinite(t) or t <= 0:
            raise DataError(f"horizon must be a positive finite time, got {self.t_star!r}")
        object.__setattr__(self, "t_star", t)


class HorizonStatus(IntEnum):
    """Per-subject status relative to t*.  For complete cases the value equals I(T > t*)."""

    CENSORED_UNKNOWN = -1
    EVENT_BEFORE_HORIZON = 0
    SURVIVED_PAST_HORIZON = 1


def classify_at_horizon(d: Dataset, h: Horizon) -> np.ndarray:
    """Status code (a :class:`HorizonStatus` value) for every subject.

    A censored subject with time exactly t* counts as surviving past the horizon;
    an event at exactly t* counts as an event before it.
    """
    t = h.t_star
    status = np.full(d.n, int(HorizonStatus.CENSORED_UNKNOWN), dtype=np.int64)
    ev = d.event == 1
    status[ev & (d.time <= t)] = HorizonStatus.EVENT_BEFORE_HORIZON
    status[d.time > t] = HorizonStatus.SURVIVED_PAST_HORIZON
    status[~ev & (d.time >= t)] = HorizonStatus.SURVIVED_PAST_HORIZON
    return status


@dataclass(frozen=True)
class KaplanMeier:
    """Product-limit step function evaluated by right- or left-continuous lookup."""

    times: np.ndarray  # distinct event times, ascending
    survival: np.ndarray  # S just after each event time

    def __call__(self, t, left=False):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="left" if left else "right")
        s = np.concatenate(([1.0], self.survival))
        return s[idx]


def kaplan_meier(time, event) -> KaplanMeier:
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    ev_times, d = np.unique(time[event], return_counts=True)
    if ev_times.size == 0:
        return KaplanMeier(np.empty(0), np.empty(0))
    sorted_time = np.sort(time)
    at_risk = time.size - np.searchsorted(sorted_time, ev_times, side="left")
    surv = np.cumprod(1.0 - d / at_risk)
    return KaplanMeier(ev_times, surv)


def km_median_survival(d: Dataset, arm=None) -> Horizon:
    """Smallest event time at which the pooled Kaplan-Meier curve reaches 0.5.

    ``arm`` restricts the estimate to one treatment arm.
    """
    time, event = d.time, d.event
    if arm is not None:
        keep = d.treatment == arm
        time, event = time[keep], event[keep]
    if not np.any(event == 1):
        raise DataError("no events: median survival undefined")
    km = kaplan_meier(time, event)
    hit = np.flatnonzero(km.survival <= 0.5)
    if hit.size == 0:
        raise DataError("Kaplan-Meier survival never reaches 0.5: median survival undefined")
    return Horizon(km.times[hit[0]])


def resolve_horizon(d: Dataset, horizon) -> Horizon:
    """Accepts a number, a Horizon, ``"auto"`` (pooled KM median) or ``"auto-control"``."""
    if isinstance(horizon, Horizon):
        return horizon
    if isinstance(horizon, str):
        if horizon == "auto":
            return km_median_survival(d)
        if horizon == "auto-control":
            return km_median_survival(d, arm=0)
        try:
            return Horizon(float(horizon))
        except ValueError:
            raise DataError(f"unrecognised horizon {horizon!r}") from None
    return Horizon(horizon)


# ---------------------------------------------------------------------------
# CSV I/O


@dataclass
class Schema:
    """Column-role mapping; every non-role column is a covariate unless listed."""

    id: str | None = "id"
    treatment: str = "treatment"
    time: str = "time"
    event: str = "event"
    covariates: list | None = None
    kinds: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - {"id", "treatment", "time", "event", "covariates", "kinds"}
        if unknown:
            raise DataError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**raw)


def _numeric_column(frame, col, path):
    raw = frame[col].to_numpy()
    try:
        # numpy's conversion is correctly rounded, so written floats read back exactly
        values = raw.astype(float)
        bad = ~np.isfinite(values)
    except ValueError:
        values = pd.to_numeric(frame[col], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(f"{path}: non-numeric value {raw[row]!r} in column {col!r} at data row {row + 1}")
    return values


def load_csv(path, schema: Schema | None = None) -> Dataset:
    schema = schema or Schema()
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot parse CSV ({exc})") from exc
    frame.columns = [c.strip() for c in frame.columns]

    roles = [schema.treatment, schema.time, schema.event]
    for col in roles:
        if col not in frame.columns:
            raise DataError(f"{path}: missing required column {col!r}")
    id_col = schema.id if schema.id in frame.columns else None
    if schema.covariates is not None:
        cov_cols = list(schema.covariates)
        for col in cov_cols:
            if col not in frame.columns:
                raise DataError(f"{path}: missing covariate column {col!r}")
    else:
        cov_cols = [c for c in frame.columns if c not in roles and c != id_col]
    if not cov_cols:
        raise DataError(f"{path}: no covariate columns")

    A = _numeric_column(frame, schema.treatment, path)
    U = _numeric_column(frame, schema.time, path)
    D = _numeric_column(frame, schema.event, path)
    bad = np.flatnonzero(~np.isin(A, (0, 1)))
    if bad.size:
        raise DataError(
            f"{path}: treatment value {frame[schema.treatment].iloc[bad[0]]!r} not in {{0,1}} "
            f"at data row {bad[0] + 1}"
        )
    bad = np.flatnonzero(~np.isin(D, (0, 1)))
    if bad.size:
        raise DataError(
            f"{path}: event value {frame[schema.event].iloc[bad[0]]!r} not in {{0,1}} "
            f"at data row {bad[0] + 1}"
        )
    bad = np.flatnonzero(U < 0)
    if bad.size:
        raise DataError(f"{path}: negative time in column {schema.time!r} at data row {bad[0] + 1}")
    X = np.column_stack([_numeric_column(frame, c, path) for c in cov_cols])

    inferred = infer_kinds(X)
    kinds = []
    for j, col in enumerate(cov_cols):
        k = schema.kinds.get(col, inferred[j])
        if k == BINARY and inferred[j] != BINARY:
            raise DataError(f"{path}: column {col!r} declared binary but has values outside {{0,1}}")
        kinds.append(k)
    ids = frame[id_col].to_numpy() if id_col else None
    return Dataset(X, A, U, D, tuple(cov_cols), tuple(kinds), ids)


def save_csv(d: Dataset, path):
    d.to_frame().to_csv(path, index=False)
