import numpy as np
import pytest

from stratkit.cohort import Cohort, StayRecord
from stratkit.taxonomy import ROOT, TaxonomyTree


def assert_gradients_match_fd(model, x, lengths, eps=1e-5, rtol=1e-4, zero_floor=1e-8):
    """Central finite differences vs analytic BPTT for every parameter.

    Coordinates where both values sit below zero_floor are compared
    absolutely (at that scale central differences cannot resolve a relative
    tolerance: the FD roundoff is ~|loss| * 1e-16 / eps).
    """
    from stratkit.rnn import backward

    _, grads = backward(model, x, lengths)
    for key, theta in model.params.items():
        flat = theta.ravel()
        gflat = grads[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = backward(model, x, lengths)
            flat[i] = orig - eps
            lm, _ = backward(model, x, lengths)
            flat[i] = orig
            numeric = (lp - lm) / (2 * eps)
            if abs(numeric) <= zero_floor and abs(gflat[i]) <= zero_floor:
                assert abs(numeric - gflat[i]) < 1e-10, f"{key}[{i}]"
                continue
            rel = abs(numeric - gflat[i]) / max(abs(numeric), abs(gflat[i]))
            assert rel < rtol, f"{key}[{i}]: rel={rel:.2e}"


@pytest.fixture
def tiny_tree():
    """Two chapters, full 4-level paths under each."""
    tree = TaxonomyTree()
    for c in ("A", "B"):
        tree.add(c, 1, ROOT)
        tree.add(f"{c}.1", 2, c)
        tree.add(f"{c}.1.1", 3, f"{c}.1")
        tree.add(f"{c}.1.1.1", 4, f"{c}.1.1")
        tree.add(f"{c}.1.1.2", 4, f"{c}.1.1")
    return tree.validate()


def make_stay(stay_id, series, label, statics=(0.0,), mask=None):
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    if mask is None:
        mask = np.ones_like(series, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[:, None]
    return StayRecord(
        stay_id=stay_id,
        series=np.where(mask, series, 0.0),
        mask=mask,
        statics=list(statics),
        label_code=label,
    )


@pytest.fixture
def make_cohort():
    def build(stays, feature_names=("f0",), static_names=("s0",)):
        return Cohort(stays=list(stays), feature_names=list(feature_names),
                      static_names=list(static_names))

    return build
