"""ICU-stay data model: ingestion of long-format cohort files, hourly
resampling, deterministic splitting, and code-frequency filtering.

A stay is an hourly T x F series with an observation mask plus a static
vector and one leaf-level taxonomy code. T is ragged across stays; the
optional max_hours cap truncates long stays from the front of the record.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DuplicateCell,
    EmptyCohort,
    MalformedRow,
    MissingLabel,
    MissingStatic,
    NegativeTimestamp,
    UnknownFeature,
)
from .seeding import unit_interval

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_MAX_HOURS = 72


@dataclass
class StayRecord:
    stay_id: str
    series: np.ndarray  # (T, F) float64; unobserved cells hold 0.0
    mask: np.ndarray  # (T, F) bool, True = observed
    statics: list  # raw values at ingest; numeric vector after encoding
    label_code: str
    # observation mask prior to imputation, kept for diagnostics and the
    # fraction_observed moment; None until the imputation stage runs
    pre_impute_mask: np.ndarray | None = None

    @property
    def n_hours(self) -> int:
        return self.series.shape[0]


@dataclass
class Cohort:
    stays: list[StayRecord] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    static_names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.stays)

    def stay_ids(self):
        return [s.stay_id for s in self.stays]

    def labels(self):
        return {s.stay_id: s.label_code for s in self.stays}


@dataclass
class IngestConfig:
    feature_names: list[str] | None = None  # None: discover and sort
    max_hours: int = DEFAULT_MAX_HOURS
    resample: bool = False  # accept fractional hours and aggregate to hourly means


def _iter_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        for row in reader:
            yield row


def resample_to_hours(raw_rows, aggregation="mean"):
    """Collapse sub-hour rows to one value per (stay, hour, feature).

    raw_rows: iterable of (stay_id, time_hours, feature, value) where
    time_hours may be fractional. Returns rows with integer hours, one per
    cell, values aggregated by the arithmetic mean of in-hour observations.
    """
    if aggregation != "mean":
        raise ValueError(f"unsupported aggregation {aggregation!r}")
    buckets: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for stay_id, t, feature, value in raw_rows:
        t = float(t)
        if t < 0:
            raise NegativeTimestamp(f"stay {stay_id!r}: timestamp {t} < 0")
        key = (stay_id, int(math.floor(t)), feature)
        if key not in buckets:
            buckets[key] = []
            order.append(key)
        if value is not None:
            buckets[key].append(float(value))
    out = []
    for key in order:
        vals = buckets[key]
        mean = sum(vals) / len(vals) if vals else None
        out.append((key[0], key[1], key[2], mean))
    return out


def ingest(timeseries_path, static_path, labels_path, config: IngestConfig | None = None) -> Cohort:
    """Build a Cohort from the three cohort CSVs.

    Per stay, T = 1 + the largest hour mentioned for it; cells without an
    observed value are masked. Duplicate (stay, hour, feature) cells are a
    hard error rather than last-wins.
    """
    config = config or IngestConfig()

    raw: list[tuple] = []  # (stay_id, hour float, feature, value-or-None)
    header_seen = False
    for row in _iter_csv(timeseries_path):
        if not header_seen:
            if row != ["stay_id", "hour", "feature", "value"]:
                raise MalformedRow(f"{timeseries_path}: unexpected header {row!r}")
            header_seen = True
            continue
        if len(row) != 4:
            raise MalformedRow(f"{timeseries_path}: expected 4 columns, got {row!r}")
        stay_id, hour_str, feature, value_str = row
        try:
            hour = float(hour_str) if config.resample else int(hour_str)
        except ValueError as exc:
            raise MalformedRow(f"{timeseries_path}: bad hour {hour_str!r}") from exc
        if hour < 0:
            raise NegativeTimestamp(f"stay {stay_id!r}: hour {hour} < 0")
        if value_str == "":
            value = None
        else:
            try:
                value = float(value_str)
            except ValueError as exc:
                raise MalformedRow(f"{timeseries_path}: bad value {value_str!r}") from exc
        raw.append((stay_id, hour, feature, value))

    if config.resample:
        raw = resample_to_hours(raw)

    feature_names = config.feature_names
    if feature_names is None:
        feature_names = sorted({feature for _, _, feature, _ in raw})
    feat_index = {f: i for i, f in enumerate(feature_names)}

    cells: dict[str, dict[tuple, float | None]] = {}
    stay_order: list[str] = []
    for stay_id, hour, feature, value in raw:
        if feature not in feat_index:
            raise UnknownFeature(f"stay {stay_id!r}: feature {feature!r} not in configured list")
        if stay_id not in cells:
            cells[stay_id] = {}
            stay_order.append(stay_id)
        key = (int(hour), feat_index[feature])
        if key in cells[stay_id]:
            raise DuplicateCell(
                f"stay {stay_id!r}: cell (hour={key[0]}, feature={feature!r}) appears twice"
            )
        cells[stay_id][key] = value

    statics, static_names = _read_statics(static_path)
    labels = _read_labels(labels_path)

    stays = []
    for stay_id in stay_order:
        if stay_id not in labels:
            raise MissingLabel(f"stay {stay_id!r} has no row in {labels_path}")
        if stay_id not in statics:
            raise MissingStatic(f"stay {stay_id!r} has no row in {static_path}")
        t_len = 1 + max(h for h, _ in cells[stay_id])
        series = np.zeros((t_len, len(feature_names)))
        mask = np.zeros((t_len, len(feature_names)), dtype=bool)
        for (hour, fi), value in cells[stay_id].items():
            if value is not None:
                series[hour, fi] = value
                mask[hour, fi] = True
        if config.max_hours and t_len > config.max_hours:
            series = series[-config.max_hours :]
            mask = mask[-config.max_hours :]
        stays.append(StayRecord(stay_id, series, mask, statics[stay_id], labels[stay_id]))

    return Cohort(stays=stays, feature_names=list(feature_names), static_names=static_names)


def _read_statics(path):
    statics = {}
    static_names = None
    for row in _iter_csv(path):
        if static_names is None:
            if not row or row[0] != "stay_id":
                raise MalformedRow(f"{path}: unexpected header {row!r}")
            static_names = row[1:]
            continue
        if len(row) != len(static_names) + 1:
            raise MalformedRow(f"{path}: expected {len(static_names) + 1} columns, got {row!r}")
        statics[row[0]] = row[1:]
    if static_names is None:
        raise MalformedRow(f"{path}: empty static file")
    return statics, static_names


def _read_labels(path):
    labels = {}
    header_seen = False
    for row in _iter_csv(path):
        if not header_seen:
            if row != ["stay_id", "code"]:
                raise MalformedRow(f"{path}: unexpected header {row!r}")
            header_seen = True
            continue
        if len(row) != 2:
            raise MalformedRow(f"{path}: expected 2 columns, got {row!r}")
        labels[row[0]] = row[1]
    return labels


def split(cohort: Cohort, ratios=(0.70, 0.15, 0.15), seed: int = 0) -> dict[str, str]:
    """Assign each stay to train/val/test purely from hash(stay_id, seed).

    The assignment is independent of stay order and of the other stays, so
    split sizes follow the binomial distribution around the ratios.
    """
    if len(cohort) == 0:
        raise EmptyCohort("cannot split an empty cohort")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be nonnegative and sum to 1, got {ratios}")
    t_train = ratios[0]
    t_val = ratios[0] + ratios[1]
    assignment = {}
    for stay_id in cohort.stay_ids():
        u = unit_interval("split", seed, stay_id)
        if u < t_train:
            assignment[stay_id] = "train"
        elif u < t_val:
            assignment[stay_id] = "val"
        else:
            assignment[stay_id] = "test"
    return assignment


def select_top_codes(cohort: Cohort, n: int = 25) -> list[str]:
    """The n most frequent leaf codes by stay count, ties broken lexicographically."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counts: dict[str, int] = {}
    for stay in cohort.stays:
        counts[stay.label_code] = counts.get(stay.label_code, 0) + 1
    ranked = sorted(counts, key=lambda c: (-counts[c], c))
    return ranked[:n]


def restrict_to_codes(cohort: Cohort, codes) -> Cohort:
    keep = set(codes)
    return replace(cohort, stays=[s for s in cohort.stays if s.label_code in keep])


def _format_value(v: float) -> str:
    return repr(float(v))


def write_cohort_csvs(cohort: Cohort, out_dir, provenance=None):
    """Write timeseries/static/labels CSVs in the ingest schema.

    Missing cells are encoded as rows with an empty value field only when the
    stay has no observation at all in that hour row range; fully unobserved
    trailing structure is reconstructed from T at ingest, so only observed
    cells plus one anchor row for the final hour are required. For
    simplicity every observed cell is written, plus an empty-value anchor at
    the last hour when that hour is fully unobserved.
    """
    import os

    ts_lines = []
    if provenance:
        ts_lines.append(f"# {provenance}")
    ts_lines.append("stay_id,hour,feature,value")
    for stay in cohort.stays:
        t_len, n_feat = stay.series.shape
        for t in range(t_len):
            for f in range(n_feat):
                if stay.mask[t, f]:
                    ts_lines.append(
                        f"{stay.stay_id},{t},{cohort.feature_names[f]},"
                        f"{_format_value(stay.series[t, f])}"
                    )
        if not stay.mask[t_len - 1].any():
            ts_lines.append(f"{stay.stay_id},{t_len - 1},{cohort.feature_names[0]},")

    st_lines = []
    if provenance:
        st_lines.append(f"# {provenance}")
    st_lines.append("stay_id," + ",".join(cohort.static_names))
    for stay in cohort.stays:
        vals = [v if isinstance(v, str) else _format_value(v) for v in stay.statics]
        st_lines.append(stay.stay_id + "," + ",".join(vals))

    lb_lines = []
    if provenance:
        lb_lines.append(f"# {provenance}")
    lb_lines.append("stay_id,code")
    for stay in cohort.stays:
        lb_lines.append(f"{stay.stay_id},{stay.label_code}")

    for fname, lines in (
        ("timeseries.csv", ts_lines),
        ("static.csv", st_lines),
        ("labels.csv", lb_lines),
    ):
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
