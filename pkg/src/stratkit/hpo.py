"""Seeded random-search hyperparameter optimization over k and t-SNE
parameters, maximizing v-measure on the validation split.

Each trial samples independently from hash(seed, trial index), evaluates on
the validation stays only (the test split is never touched), and is
recorded whether it succeeds or fails; failed trials carry the failure
reason and are excluded from the best pick.
"""

from dataclasses import dataclass

import numpy as np

from .embed_stat import EmbeddingMatrix
from .errors import EmptySpace, StratkitError
from .kmeans import kmeans_fit
from .metrics import v_measure
from .seeding import rng_for, stable_hash64
from .stratify import level_labels
from .taxonomy import TaxonomyTree
from .tsne import TsneConfig, tsne_fit


@dataclass
class SearchSpace:
    k_min: int = 2
    k_max: int = 64
    perplexity_min: float = 5.0
    perplexity_max: float = 50.0
    out_dims_choices: tuple = (2, 10)

    def validate(self, n_points):
        k_hi = min(self.k_max, n_points - 1)
        if k_hi < self.k_min:
            raise EmptySpace(f"no feasible k in [{self.k_min}, {k_hi}]")
        return self


@dataclass
class TrialRecord:
    trial: int
    k: int
    use_tsne: bool
    perplexity: float
    out_dims: int
    objective: float  # nan when failed
    status: str  # "ok" or "failed:<reason>"
    seed: int


def sample_trial(space: SearchSpace, n_points, seed, trial) -> TrialRecord:
    rng = rng_for(seed, "hpo", trial)
    k_hi = min(space.k_max, n_points - 1)
    k = int(rng.integers(space.k_min, k_hi + 1))
    use_tsne = bool(rng.integers(0, 2))
    perplexity = float(rng.uniform(space.perplexity_min, space.perplexity_max))
    out_dims = int(space.out_dims_choices[int(rng.integers(0, len(space.out_dims_choices)))])
    return TrialRecord(
        trial=trial,
        k=k,
        use_tsne=use_tsne,
        perplexity=perplexity,
        out_dims=out_dims,
        objective=float("nan"),
        status="pending",
        seed=seed,
    )


def hpo_run(
    embeddings: EmbeddingMatrix,
    tree: TaxonomyTree,
    leaf_labels: dict,
    level: int,
    split_assignment: dict,
    space: SearchSpace | None = None,
    n_trials: int = 50,
    seed: int = 0,
):
    """Returns (best TrialRecord or None, list of all TrialRecords)."""
    space = space or SearchSpace()
    labels_at = level_labels(tree, leaf_labels)
    val_rows = [i for i, sid in enumerate(embeddings.stay_ids) if split_assignment.get(sid) == "val"]
    if len(val_rows) < 2:
        raise EmptySpace("validation split too small for HPO")
    x_val = embeddings.vectors[val_rows]
    truth = [labels_at[embeddings.stay_ids[i]][level] for i in val_rows]
    space.validate(len(val_rows))

    trials = []
    for t in range(n_trials):
        record = sample_trial(space, len(val_rows), seed, t)
        try:
            x = x_val
            if record.use_tsne:
                cfg = TsneConfig(
                    out_dims=record.out_dims,
                    perplexity=record.perplexity,
                    seed=stable_hash64(seed, "hpo", t, "tsne"),
                )
                x = tsne_fit(x_val, cfg).layout
            km = kmeans_fit(x, record.k, seed=stable_hash64(seed, "hpo", t, "kmeans"))
            record.objective = v_measure(truth, list(km.assignments))["v"]
            record.status = "ok"
        except StratkitError as exc:
            record.status = f"failed:{type(exc).__name__}"
            record.objective = float("nan")
        trials.append(record)

    best = None
    for record in trials:
        if record.status != "ok":
            continue
        if best is None or record.objective > best.objective:
            best = record
    return best, trials


def trials_csv_lines(trials, provenance=None):
    lines = []
    if provenance:
        lines.append(f"# {provenance}")
    lines.append("trial,k,use_tsne,perplexity,out_dims,objective,status")
    for r in trials:
        obj = "" if np.isnan(r.objective) else repr(float(r.objective))
        lines.append(
            f"{r.trial},{r.k},{str(r.use_tsne).lower()},{r.perplexity!r},{r.out_dims},{obj},{r.status}"
        )
    return lines
