"""Weighted metric datasets: ingestion, validation and weight normalization.

A file holds one scenario per row. Every declared metric column becomes its
own :class:`MetricDataset` sharing the row order, weights and (optional)
re-simulated outcome of the file.

CSV layout::

    scenario_id,weight,<metric>...[,resim_outcome]

Numbers are written with ``repr`` (shortest round-trip form), so a
write-then-load cycle reproduces every float bit for bit. The JSON mirror is
an array of objects with the same keys.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

REFERENCE = "reference"
SYNTHETIC = "synthetic"

# Declared supports for the metrics of the rear-end case study; values
# outside raise a warning only, since the fitted family is chosen per metric.
METRIC_SUPPORT: dict[str, tuple[float, float]] = {
    "P_inj": (0.0, 1.0),
    "t_nr": (-math.inf, 0.0),
    "a_l_min": (-math.inf, 0.0),
    "a_f_min": (-math.inf, 0.0),
}


class DatasetError(ValueError):
    """Raised for malformed input files; the message names the offending row."""


class WeightedSample(NamedTuple):
    value: float
    weight: float
    outcome: float | None = None


@dataclass(frozen=True)
class Schema:
    """Column mapping for :func:`load_datasets`.

    ``weight`` and ``outcome`` may name columns that are absent from the file:
    a missing weight column means unit weights, a missing outcome column means
    no outcomes.
    """

    metrics: Sequence[str]
    weight: str | None = "weight"
    outcome: str | None = "resim_outcome"
    id: str = "scenario_id"
    role: str = REFERENCE
    support: dict[str, tuple[float, float]] = field(default_factory=dict)

    def support_for(self, metric: str) -> tuple[float, float] | None:
        return self.support.get(metric, METRIC_SUPPORT.get(metric))


@dataclass(frozen=True, eq=False)
class MetricDataset:
    """One metric's weighted observations for one role (reference/synthetic)."""

    metric_id: str
    role: str
    values: np.ndarray
    weights: np.ndarray
    outcomes: np.ndarray | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if values.ndim != 1 or weights.shape != values.shape:
            raise DatasetError("values and weights must be 1-D arrays of equal length")
        if values.size < 2:
            raise DatasetError(f"{self.metric_id}: need at least 2 samples, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise DatasetError(f"{self.metric_id}: non-finite value at row {_first(~np.isfinite(values))}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            bad = _first(~np.isfinite(weights) | (weights < 0))
            raise DatasetError(f"{self.metric_id}: invalid weight at row {bad}")
        if not weights.sum() > 0:
            raise DatasetError(f"{self.metric_id}: sum of weights must be positive")
        values.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        if self.outcomes is not None:
            outcomes = np.array(self.outcomes, dtype=float)
            if outcomes.shape != values.shape:
                raise DatasetError("outcomes must match values in length")
            present = ~np.isnan(outcomes)
            if np.any((outcomes[present] < 0) | (outcomes[present] > 1)):
                raise DatasetError(f"{self.metric_id}: outcome outside [0, 1]")
            outcomes.flags.writeable = False
            object.__setattr__(self, "outcomes", outcomes)
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def has_outcomes(self) -> bool:
        return self.outcomes is not None and not np.any(np.isnan(self.outcomes))

    @property
    def samples(self) -> list[WeightedSample]:
        outs = self.outcomes if self.outcomes is not None else [None] * self.n
        return [
            WeightedSample(float(v), float(w), None if o is None or np.isnan(o) else float(o))
            for v, w, o in zip(self.values, self.weights, outs)
        ]

    def take(self, index: np.ndarray, *, unit_weights: bool = False, role: str | None = None) -> MetricDataset:
        """Row subset/resample by integer index."""
        index = np.asarray(index, dtype=np.intp)
        return MetricDataset(
            metric_id=self.metric_id,
            role=role or self.role,
            values=self.values[index],
            weights=np.ones(index.size) if unit_weights else self.weights[index],
            outcomes=None if self.outcomes is None else self.outcomes[index],
            ids=None if self.ids is None else tuple(self.ids[i] for i in index),
        )

    def with_weights(self, weights: np.ndarray) -> MetricDataset:
        return MetricDataset(self.metric_id, self.role, self.values, weights, self.outcomes, self.ids)


def _first(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0]) + 1


def normalize_weights(d: MetricDataset, mode: str = "sum_to_n") -> MetricDataset:
    """Rescale weights; ``sum_to_n`` makes them sum to the sample count."""
    total = float(d.weights.sum())
    if not total > 0:
        raise DatasetError(f"{d.metric_id}: all weights are zero")
    if mode == "none":
        return d
    if mode != "sum_to_n":
        raise ValueError(f"unknown normalization mode {mode!r}")
    return d.with_weights(d.weights * (d.n / total))


def check_support(d: MetricDataset, support: tuple[float, float] | None) -> None:
    if support is None:
        return
    lo, hi = support
    outside = (d.values < lo) | (d.values > hi)
    if np.any(outside):
        warnings.warn(
            f"{d.metric_id}: {int(outside.sum())} value(s) outside declared support [{lo}, {hi}]",
            stacklevel=2,
        )


def _parse_number(cell: str, *, column: str, row: int, allow_empty: bool = False) -> float:
    text = cell.strip() if cell is not None else ""
    if text == "":
        if allow_empty:
            return math.nan
        raise DatasetError(f"row {row}: empty cell in column {column!r}")
    try:
        return float(text)
    except ValueError:
        raise DatasetError(f"row {row}: non-numeric value {text!r} in column {column!r}") from None


def _read_rows(path: Path) -> tuple[list[str], list[tuple[int, dict]]]:
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise DatasetError(f"{path}: JSON input must be an array of objects")
        rows = []
        for i, obj in enumerate(data, start=1):
            if not isinstance(obj, dict):
                raise DatasetError(f"row {i}: expected an object")
            rows.append((i, {k: ("" if v is None else str(v)) for k, v in obj.items()}))
        header = list(data[0].keys()) if data else []
        return header, rows
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        rows = []
        for raw in reader:
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DatasetError(
                    f"row {reader.line_num - 1}: expected {len(header)} fields, got {len(raw)}"
                )
            rows.append((reader.line_num - 1, dict(zip(header, raw))))
    return header, rows


def load_table(path: str | Path) -> tuple[list[str], list[tuple[int, dict]]]:
    """Raw rows of a CSV/JSON file as ``(row_number, {column: text})``."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    header, rows = _read_rows(path)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return header, rows


def load_datasets(path: str | Path, schema: Schema) -> list[MetricDataset]:
    """Read one file into a :class:`MetricDataset` per metric column."""
    header, rows = load_table(path)
    columns = set(header) | {k for _, r in rows for k in r}
    if not schema.metrics:
        raise DatasetError("schema must name at least one metric column")
    for m in schema.metrics:
        if m not in columns:
            raise DatasetError(f"{path}: metric column {m!r} not found")
    has_weight = schema.weight is not None and schema.weight in columns
    has_outcome = schema.outcome is not None and schema.outcome in columns

    weights, outcomes, ids = [], [], []
    values = {m: [] for m in schema.metrics}
    for row_no, row in rows:
        w = _parse_number(row.get(schema.weight, ""), column=schema.weight, row=row_no) if has_weight else 1.0
        if not math.isfinite(w) or w < 0:
            raise DatasetError(f"row {row_no}: invalid weight {w!r} (must be finite and >= 0)")
        weights.append(w)
        for m in schema.metrics:
            v = _parse_number(row.get(m, ""), column=m, row=row_no)
            if not math.isfinite(v):
                raise DatasetError(f"row {row_no}: non-finite value in column {m!r}")
            values[m].append(v)
        if has_outcome:
            o = _parse_number(row.get(schema.outcome, ""), column=schema.outcome, row=row_no, allow_empty=True)
            if not math.isnan(o) and not 0.0 <= o <= 1.0:
                raise DatasetError(f"row {row_no}: outcome {o!r} outside [0, 1]")
            outcomes.append(o)
        ids.append(row.get(schema.id, str(row_no)))

    out = []
    for m in schema.metrics:
        d = MetricDataset(
            metric_id=m,
            role=schema.role,
            values=np.array(values[m]),
            weights=np.array(weights),
            outcomes=np.array(outcomes) if has_outcome else None,
            ids=tuple(ids),
        )
        check_support(d, schema.support_for(m))
        out.append(d)
    return out


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_datasets(
    path: str | Path,
    datasets: Iterable[MetricDataset],
    *,
    weight: str = "weight",
    outcome: str = "resim_outcome",
    id_column: str = "scenario_id",
) -> None:
    """Write datasets that share rows back to one CSV (or JSON by suffix)."""
    datasets = list(datasets)
    if not datasets:
        raise ValueError("nothing to write")
    n = datasets[0].n
    if any(d.n != n for d in datasets):
        raise ValueError("datasets written to one file must share the row count")
    first = datasets[0]
    ids = first.ids or tuple(str(i + 1) for i in range(n))
    header = [id_column, weight] + [d.metric_id for d in datasets]
    with_outcome = first.outcomes is not None
    if with_outcome:
        header.append(outcome)
    records = []
    for i in range(n):
        rec = [ids[i], _fmt(first.weights[i])] + [_fmt(d.values[i]) for d in datasets]
        if with_outcome:
            rec.append(_fmt(first.outcomes[i]))
        records.append(rec)

    path = Path(path)
    if path.suffix.lower() == ".json":
        objs = [dict(zip(header, r)) for r in records]
        for o in objs:
            for k in header[1:]:
                o[k] = float(o[k]) if o[k] != "" else None
        path.write_text(json.dumps(objs, indent=1) + "\n", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(records)
