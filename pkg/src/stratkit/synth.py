"""Synthetic cohort generator with a planted four-level taxonomy signal.

Each tree node carries a random mean-offset vector in feature space whose
scale shrinks with depth, so coarse groupings are easier to recover from the
data than fine ones. Stay series follow an AR(1) process around the summed
ancestor offsets of the stay's leaf; statics get leaf-dependent offsets at
the coarsest scale. Leaf prevalence is Zipf-like, giving the long-tailed
label histogram typical of clinical coding.
"""

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, StayRecord
from .errors import ConfigMismatch
from .seeding import rng_for
from .taxonomy import ROOT, TaxonomyTree


@dataclass
class SynthConfig:
    branching: tuple = (3, 3, 3, 2)  # children per node at each level
    n_stays: int = 2000
    n_features: int = 12
    n_statics: int = 4
    hours: int = 48
    signal_strengths: tuple = (2.0, 1.0, 0.5, 0.25)  # per-level offset scale
    noise_std: float = 1.0
    ar_coefficient: float = 0.8
    missing_rate: float = 0.1
    zipf_exponent: float = 1.1
    seed: int = 0

    def validate(self):
        if len(self.branching) != 4 or any(b < 1 for b in self.branching):
            raise ValueError(f"branching must be 4 integers >= 1, got {self.branching}")
        if not 0 <= self.missing_rate < 1:
            raise ValueError("missing_rate must be in [0, 1)")
        if not 0 <= self.ar_coefficient < 1:
            raise ValueError("ar_coefficient must be in [0, 1)")
        return self


def generate_taxonomy(config: SynthConfig) -> TaxonomyTree:
    """Complete 4-level tree with path-named codes (C2.1.3.2 style)."""
    config.validate()
    tree = TaxonomyTree()
    level_codes = [[]]
    for i in range(config.branching[0]):
        code = f"C{i + 1}"
        tree.add(code, 1, ROOT, name=code)
        level_codes[0].append(code)
    for level in range(2, 5):
        codes = []
        for parent in level_codes[level - 2]:
            for i in range(config.branching[level - 1]):
                code = f"{parent}.{i + 1}"
                tree.add(code, level, parent, name=code)
                codes.append(code)
        level_codes.append(codes)
    return tree.validate()


def _leaf_probabilities(leaves, exponent):
    ranks = np.arange(1, len(leaves) + 1, dtype=float)
    weights = ranks**-exponent
    return weights / weights.sum()


def _node_offsets(tree: TaxonomyTree, config: SynthConfig, width, stream):
    """Fixed per-node offset vectors, scaled by the node level's signal strength."""
    offsets = {}
    for code, node in tree.nodes.items():
        rng = rng_for(config.seed, stream, code)
        offsets[code] = rng.standard_normal(width) * config.signal_strengths[node.level - 1]
    return offsets


def _leaf_mean(tree, offsets, leaf, width):
    mean = np.zeros(width)
    code = leaf
    while code != ROOT:
        mean += offsets[code]
        code = tree.nodes[code].parent
    return mean


def generate_cohort(config: SynthConfig, tree: TaxonomyTree) -> Cohort:
    config.validate()
    expected_leaves = int(np.prod(config.branching))
    leaves = sorted(tree.codes_at_level(4))
    if len(leaves) != expected_leaves or len(tree.codes_at_level(1)) != config.branching[0]:
        raise ConfigMismatch(
            f"taxonomy shape does not match branching {config.branching}"
        )

    leaf_probs = _leaf_probabilities(leaves, config.zipf_exponent)
    cum_probs = np.cumsum(leaf_probs)
    feature_offsets = _node_offsets(tree, config, config.n_features, "feature-offset")
    feature_means = {leaf: _leaf_mean(tree, feature_offsets, leaf, config.n_features) for leaf in leaves}

    # statics carry a leaf-level offset at the coarsest signal scale
    static_offsets = {
        leaf: rng_for(config.seed, "static-offset", leaf).standard_normal(config.n_statics)
        * config.signal_strengths[0]
        for leaf in leaves
    }

    feature_names = [f"feat_{i:02d}" for i in range(config.n_features)]
    static_names = [f"static_{i:02d}" for i in range(config.n_statics)]

    stays = []
    a = config.ar_coefficient
    for idx in range(config.n_stays):
        rng = rng_for(config.seed, "stay", idx)
        leaf = leaves[int(np.searchsorted(cum_probs, rng.random(), side="right"))]
        mu = feature_means[leaf]

        noise = rng.standard_normal((config.hours, config.n_features)) * config.noise_std
        series = np.empty((config.hours, config.n_features))
        prev = mu  # start at the stationary mean
        for t in range(config.hours):
            prev = a * prev + (1 - a) * mu + noise[t]
            series[t] = prev

        statics = static_offsets[leaf] + rng.standard_normal(config.n_statics) * config.noise_std
        mask = rng.random((config.hours, config.n_features)) >= config.missing_rate
        series = np.where(mask, series, 0.0)

        stays.append(
            StayRecord(
                stay_id=f"S{idx:06d}",
                series=series,
                mask=mask,
                statics=[repr(float(v)) for v in statics],
                label_code=leaf,
            )
        )

    return Cohort(stays=stays, feature_names=feature_names, static_names=static_names)
