"""Feature-wise robust scaling, forward-fill imputation, and categorical
encoding, fitted on training stays only and applied to the whole cohort.

Order is fixed: scale, then impute, then encode. Scaling first keeps the
zero vector at the population-typical point, so median head-fill during
imputation lands at (approximately) zero.
"""

from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, StayRecord
from .errors import FeatureMismatch, NoObservedValues


@dataclass
class ScalerParams:
    feature_names: list[str]
    medians: np.ndarray
    iqrs: np.ndarray
    static_names: list[str] = field(default_factory=list)
    static_medians: np.ndarray | None = None
    static_iqrs: np.ndarray | None = None

    def to_dict(self):
        d = {
            "feature_names": self.feature_names,
            "medians": [float(v) for v in self.medians],
            "iqrs": [float(v) for v in self.iqrs],
            "static_names": self.static_names,
        }
        if self.static_medians is not None:
            d["static_medians"] = [float(v) for v in self.static_medians]
            d["static_iqrs"] = [float(v) for v in self.static_iqrs]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature_names=list(d["feature_names"]),
            medians=np.array(d["medians"], dtype=float),
            iqrs=np.array(d["iqrs"], dtype=float),
            static_names=list(d.get("static_names", [])),
            static_medians=np.array(d["static_medians"], dtype=float)
            if "static_medians" in d
            else None,
            static_iqrs=np.array(d["static_iqrs"], dtype=float) if "static_iqrs" in d else None,
        )


@dataclass
class EncodingSpec:
    """Per-static encoding: 'numeric' pass-through, or categorical with the
    sorted distinct training values as the category list."""

    modes: dict  # static name -> "numeric" | "onehot" | "ordinal"
    categories: dict  # static name -> list of category strings (categoricals only)

    def encoded_names(self, static_names):
        names = []
        for s in static_names:
            mode = self.modes[s]
            if mode == "onehot":
                names.extend(f"{s}={c}" for c in self.categories[s])
            else:
                names.append(s)
        return names

    def to_dict(self):
        return {"modes": self.modes, "categories": self.categories}

    @classmethod
    def from_dict(cls, d):
        return cls(modes=dict(d["modes"]), categories=dict(d["categories"]))


def _quantiles(values):
    """median, Q1, Q3 with linear interpolation on sorted values."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(med), float(q1), float(q3)


def fit_scaler(cohort: Cohort, split_assignment: dict, categorical: dict | None = None) -> ScalerParams:
    """Median/IQR per time-series feature and per numeric static, pooled over
    all observed cells of train stays."""
    categorical = categorical or {}
    train = [s for s in cohort.stays if split_assignment[s.stay_id] == "train"]
    if not train:
        raise NoObservedValues("train split is empty")

    n_feat = len(cohort.feature_names)
    medians = np.zeros(n_feat)
    iqrs = np.zeros(n_feat)
    for fi, fname in enumerate(cohort.feature_names):
        pooled = np.concatenate([s.series[s.mask[:, fi], fi] for s in train]) if train else np.array([])
        if pooled.size == 0:
            raise NoObservedValues(f"feature {fname!r} has no observed train values")
        med, q1, q3 = _quantiles(pooled)
        medians[fi] = med
        iqrs[fi] = q3 - q1

    numeric_statics = [s for s in cohort.static_names if s not in categorical]
    st_medians = np.zeros(len(numeric_statics))
    st_iqrs = np.zeros(len(numeric_statics))
    for si, sname in enumerate(numeric_statics):
        col = cohort.static_names.index(sname)
        vals = [float(s.statics[col]) for s in train]
        med, q1, q3 = _quantiles(vals)
        st_medians[si] = med
        st_iqrs[si] = q3 - q1

    return ScalerParams(
        feature_names=list(cohort.feature_names),
        medians=medians,
        iqrs=iqrs,
        static_names=numeric_statics,
        static_medians=st_medians,
        static_iqrs=st_iqrs,
    )


def transform(cohort: Cohort, scaler: ScalerParams) -> Cohort:
    """Apply (x - median) / IQR to observed cells; IQR = 0 maps the feature to 0."""
    if scaler.feature_names != cohort.feature_names:
        raise FeatureMismatch(
            f"scaler fitted on {scaler.feature_names}, cohort has {cohort.feature_names}"
        )
    safe_iqr = np.where(scaler.iqrs > 0, scaler.iqrs, 1.0)
    stays = []
    for stay in cohort.stays:
        scaled = (stay.series - scaler.medians) / safe_iqr
        scaled = np.where(scaler.iqrs > 0, scaled, 0.0)
        scaled = np.where(stay.mask, scaled, 0.0)
        stays.append(
            StayRecord(stay.stay_id, scaled, stay.mask.copy(), stay.statics, stay.label_code)
        )
    return Cohort(stays=stays, feature_names=cohort.feature_names, static_names=cohort.static_names)


def population_medians(cohort: Cohort, split_assignment: dict) -> np.ndarray:
    """Per-feature median over observed train cells (about zero post-scaling)."""
    train = [s for s in cohort.stays if split_assignment[s.stay_id] == "train"]
    meds = np.zeros(len(cohort.feature_names))
    for fi in range(len(cohort.feature_names)):
        pooled = np.concatenate([s.series[s.mask[:, fi], fi] for s in train])
        meds[fi] = _quantiles(pooled)[0] if pooled.size else 0.0
    return meds


def impute(cohort: Cohort, pop_medians: np.ndarray) -> Cohort:
    """Forward-fill per stay and feature; cells before the first observation
    take the population median. Observed cells are never altered; the
    pre-imputation mask is retained on each stay."""
    stays = []
    for stay in cohort.stays:
        t_len, n_feat = stay.series.shape
        # index of the most recent observation per cell; -1 before the first
        obs_idx = np.where(stay.mask, np.arange(t_len)[:, None], -1)
        last_obs = np.maximum.accumulate(obs_idx, axis=0)
        filled = stay.series[np.clip(last_obs, 0, None), np.arange(n_feat)[None, :]]
        filled = np.where(last_obs >= 0, filled, pop_medians[None, :])
        stays.append(
            StayRecord(
                stay.stay_id,
                filled,
                np.ones_like(stay.mask),
                stay.statics,
                stay.label_code,
                pre_impute_mask=stay.pre_impute_mask
                if stay.pre_impute_mask is not None
                else stay.mask.copy(),
            )
        )
    return Cohort(stays=stays, feature_names=cohort.feature_names, static_names=cohort.static_names)


def fit_encoding(cohort: Cohort, split_assignment: dict, categorical: dict | None = None) -> EncodingSpec:
    """Category lists are the sorted distinct train-set values per categorical."""
    categorical = categorical or {}
    for name, mode in categorical.items():
        if name not in cohort.static_names:
            raise FeatureMismatch(f"categorical static {name!r} not in cohort statics")
        if mode not in ("onehot", "ordinal"):
            raise ValueError(f"unknown encoding mode {mode!r} for static {name!r}")
    train = [s for s in cohort.stays if split_assignment[s.stay_id] == "train"]
    modes = {}
    categories = {}
    for col, name in enumerate(cohort.static_names):
        if name in categorical:
            modes[name] = categorical[name]
            categories[name] = sorted({str(s.statics[col]) for s in train})
        else:
            modes[name] = "numeric"
    return EncodingSpec(modes=modes, categories=categories)


def encode_statics(cohort: Cohort, spec: EncodingSpec, scaler: ScalerParams) -> Cohort:
    """Produce numeric static vectors: numeric statics robust-scaled, one-hot
    expanded to one slot per category (unseen -> all zeros), ordinals mapped
    to rank index (unseen -> -1)."""
    numeric_idx = {name: i for i, name in enumerate(scaler.static_names)}
    encoded_names = spec.encoded_names(cohort.static_names)
    stays = []
    for stay in cohort.stays:
        out = []
        for col, name in enumerate(cohort.static_names):
            raw = stay.statics[col]
            mode = spec.modes[name]
            if mode == "numeric":
                x = float(raw)
                i = numeric_idx[name]
                iqr = scaler.static_iqrs[i]
                out.append((x - scaler.static_medians[i]) / iqr if iqr > 0 else 0.0)
            elif mode == "onehot":
                cats = spec.categories[name]
                slot = [0.0] * len(cats)
                if str(raw) in cats:
                    slot[cats.index(str(raw))] = 1.0
                out.extend(slot)
            else:  # ordinal
                cats = spec.categories[name]
                out.append(float(cats.index(str(raw))) if str(raw) in cats else -1.0)
        stays.append(
            StayRecord(
                stay.stay_id,
                stay.series,
                stay.mask,
                np.array(out, dtype=float),
                stay.label_code,
                pre_impute_mask=stay.pre_impute_mask,
            )
        )
    return Cohort(stays=stays, feature_names=cohort.feature_names, static_names=encoded_names)


def run_pipeline(cohort: Cohort, split_assignment: dict, categorical: dict | None = None):
    """scale -> impute -> encode; returns (processed cohort, scaler, encoding)."""
    scaler = fit_scaler(cohort, split_assignment, categorical)
    scaled = transform(cohort, scaler)
    meds = population_medians(scaled, split_assignment)
    imputed = impute(scaled, meds)
    spec = fit_encoding(cohort, split_assignment, categorical)
    encoded = encode_statics(imputed, spec, scaler)
    return encoded, scaler, spec
