"""Training-free stay embedding: windowed statistical moments plus statics.

The stay timeline is cut into W contiguous near-equal windows (earlier
windows take the extra hour when T is not divisible by W); per window and
feature a fixed list of moments is computed and concatenated window-major,
then feature-major, then moment-major, with the encoded statics appended.
Windows that end up empty (T < W) emit zeros so the dimensionality is the
same for every stay.
"""

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort
from .errors import EmptySeries

MOMENTS = ("mean", "std", "min", "max", "fraction_observed")


@dataclass
class StatConfig:
    n_windows: int = 4
    moments: tuple = MOMENTS
    include_statics: bool = True

    def validate(self):
        if self.n_windows < 1:
            raise ValueError("n_windows must be >= 1")
        if not self.moments:
            raise ValueError("moments must be non-empty")
        unknown = [m for m in self.moments if m not in MOMENTS]
        if unknown:
            raise ValueError(f"unknown moments {unknown}")
        return self


@dataclass
class EmbeddingMatrix:
    stay_ids: list[str]
    vectors: np.ndarray  # (N, d)
    provenance: str  # stat | gru | lstm

    @property
    def dim(self):
        return self.vectors.shape[1]


def window_bounds(t_len: int, n_windows: int):
    """(start, end) pairs of W contiguous windows with lengths differing by
    at most one; earlier windows take the extra hour."""
    base, rem = divmod(t_len, n_windows)
    bounds = []
    start = 0
    for w in range(n_windows):
        length = base + (1 if w < rem else 0)
        bounds.append((start, start + length))
        start += length
    return bounds


def _window_moments(values, observed, moments):
    out = []
    empty = values.shape[0] == 0
    for m in moments:
        if empty:
            out.append(0.0)
        elif m == "mean":
            out.append(float(values.mean()))
        elif m == "std":
            out.append(float(values.std()))  # population std: defined for length-1 windows
        elif m == "min":
            out.append(float(values.min()))
        elif m == "max":
            out.append(float(values.max()))
        elif m == "fraction_observed":
            out.append(float(observed.mean()))
    return out


def embed_stat(cohort: Cohort, config: StatConfig | None = None) -> EmbeddingMatrix:
    """Pure per-stay map; fraction_observed uses the pre-imputation mask."""
    config = (config or StatConfig()).validate()
    vectors = []
    for stay in cohort.stays:
        if stay.series.shape[0] == 0:
            raise EmptySeries(f"stay {stay.stay_id!r} has an empty series")
        observed = stay.pre_impute_mask if stay.pre_impute_mask is not None else stay.mask
        vec = []
        for start, end in window_bounds(stay.series.shape[0], config.n_windows):
            for fi in range(stay.series.shape[1]):
                vec.extend(
                    _window_moments(stay.series[start:end, fi], observed[start:end, fi], config.moments)
                )
        if config.include_statics:
            vec.extend(float(v) for v in stay.statics)
        vectors.append(vec)
    return EmbeddingMatrix(
        stay_ids=cohort.stay_ids(),
        vectors=np.array(vectors, dtype=float),
        provenance="stat",
    )
