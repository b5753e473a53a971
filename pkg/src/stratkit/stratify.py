"""The three evaluation formulations: flat stratification per taxonomy
level, iterative hierarchical rediscovery, and cluster label assignment.

Clustering never sees labels; labels enter only afterwards, to score the
partitions and to name the clusters. Rediscovery re-clusters each
sufficiently large cluster among its own members, with the child k taken
from the number of distinct next-level labels present, so the known
taxonomy width is what the clustering is asked to recover.
"""

from dataclasses import dataclass, field

import numpy as np

from .embed_stat import EmbeddingMatrix
from .errors import NoTrainMembersAnywhere
from .kmeans import kmeans_fit
from .metrics import accuracy, ami, silhouette, v_measure
from .seeding import stable_hash64
from .taxonomy import TaxonomyTree

MIN_CLUSTER_SIZE = 10  # clusters need strictly more members to be refined


@dataclass
class Cluster:
    cluster_id: int
    members: list[str]  # stay ids
    parent_cluster: int | None = None
    evaluated: bool = True
    assigned_label: str | None = None
    fallback: bool = False


@dataclass
class ClusterLevelResult:
    level: int
    clusters: list[Cluster]
    metrics: dict = field(default_factory=dict)

    def assignment_by_stay(self):
        out = {}
        for cluster in self.clusters:
            for sid in cluster.members:
                out[sid] = cluster.cluster_id
        return out


def level_labels(tree: TaxonomyTree, leaf_labels: dict) -> dict:
    """stay_id -> {level: code} for levels 1..4, from the leaf code."""
    out = {}
    for sid, leaf in leaf_labels.items():
        out[sid] = {i: tree.ancestor_at_level(leaf, i) for i in range(1, 5)}
    return out


def stratify_flat(
    embeddings: EmbeddingMatrix,
    tree: TaxonomyTree,
    leaf_labels: dict,
    level: int,
    k: int | None = None,
    seed: int = 0,
):
    """Cluster all stays once and score the partition against level-i codes.

    k defaults to the number of distinct level-i codes present in the cohort.
    Returns (ClusterLevelResult, metrics dict).
    """
    labels_at = level_labels(tree, leaf_labels)
    truth = [labels_at[sid][level] for sid in embeddings.stay_ids]
    if k is None:
        k = len(set(truth))
    result = kmeans_fit(embeddings.vectors, k, seed=stable_hash64(seed, "flat", level))
    clusters = [
        Cluster(cluster_id=j, members=[sid for sid, a in zip(embeddings.stay_ids, result.assignments) if a == j])
        for j in range(k)
    ]
    vm = v_measure(truth, list(result.assignments))
    n_distinct = len(set(result.assignments.tolist()))
    scores = {
        "v_measure": vm["v"],
        "homogeneity": vm["homogeneity"],
        "completeness": vm["completeness"],
        "ami": ami(truth, list(result.assignments)),
        "silhouette": silhouette(embeddings.vectors, result.assignments)
        if n_distinct >= 2
        else 0.0,
        "k": k,
        "inertia": result.inertia,
    }
    level_result = ClusterLevelResult(level=level, clusters=clusters, metrics=scores)
    return level_result, scores


def _majority_label(codes):
    counts = {}
    for c in codes:
        counts[c] = counts.get(c, 0) + 1
    return sorted(counts, key=lambda c: (-counts[c], c))[0]


def rediscover(
    embeddings: EmbeddingMatrix,
    tree: TaxonomyTree,
    leaf_labels: dict,
    seed: int = 0,
    min_cluster_size: int = MIN_CLUSTER_SIZE,
):
    """Iteratively refine clusters from level 1 down to level 4.

    Level 1 clusters the full cohort with k = number of level-1 codes
    present. At each deeper level, every cluster with more than
    min_cluster_size members and at least 2 distinct next-level labels is
    re-clustered among its own members into as many clusters as there are
    distinct next-level labels; smaller or single-label clusters are skipped
    and marked unevaluated. Transition accuracy is the unweighted mean over
    refined clusters of their members' majority-vote agreement at the next
    level.

    Returns (list of ClusterLevelResult for levels 1..4, transitions dict).
    """
    labels_at = level_labels(tree, leaf_labels)
    row_of = {sid: i for i, sid in enumerate(embeddings.stay_ids)}

    k1 = len({labels_at[sid][1] for sid in embeddings.stay_ids})
    top = kmeans_fit(embeddings.vectors, max(k1, 1), seed=stable_hash64(seed, "rediscover", 1))
    levels = [
        ClusterLevelResult(
            level=1,
            clusters=[
                Cluster(
                    cluster_id=j,
                    members=[sid for sid, a in zip(embeddings.stay_ids, top.assignments) if a == j],
                )
                for j in range(max(k1, 1))
            ],
        )
    ]

    transitions = {}
    for level in (1, 2, 3):
        parent_result = levels[-1]
        next_clusters = []
        per_cluster_acc = []
        n_skipped = 0
        for parent in parent_result.clusters:
            child_truth = [labels_at[sid][level + 1] for sid in parent.members]
            distinct = sorted(set(child_truth))
            if len(parent.members) <= min_cluster_size or len(distinct) < 2:
                parent.evaluated = False
                n_skipped += 1
                continue
            k_child = len(distinct)
            sub_x = embeddings.vectors[[row_of[sid] for sid in parent.members]]
            sub = kmeans_fit(
                sub_x,
                k_child,
                seed=stable_hash64(seed, "rediscover", level + 1, parent.cluster_id),
            )
            # majority-vote label per child cluster, then member agreement
            child_map = {}
            for local_id in range(k_child):
                member_ids = [
                    sid for sid, a in zip(parent.members, sub.assignments) if a == local_id
                ]
                label = _majority_label(
                    [labels_at[sid][level + 1] for sid in member_ids]
                ) if member_ids else None
                child_map[local_id] = (member_ids, label)
            hits = sum(
                1
                for sid, a in zip(parent.members, sub.assignments)
                if child_map[a][1] == labels_at[sid][level + 1]
            )
            per_cluster_acc.append(hits / len(parent.members))
            for local_id in range(k_child):
                member_ids, label = child_map[local_id]
                if not member_ids:
                    continue
                next_clusters.append(
                    Cluster(
                        cluster_id=len(next_clusters),
                        members=member_ids,
                        parent_cluster=parent.cluster_id,
                        assigned_label=label,
                    )
                )
        transitions[f"L{level}->L{level + 1}"] = {
            "accuracy_top1": float(np.mean(per_cluster_acc)) if per_cluster_acc else float("nan"),
            "n_evaluated_clusters": len(per_cluster_acc),
            "n_skipped_clusters": n_skipped,
        }
        levels.append(ClusterLevelResult(level=level + 1, clusters=next_clusters))
    return levels, transitions


STRATEGIES = ("centroid", "medoid", "majority")


def assign_cluster_labels(
    result: ClusterLevelResult,
    embeddings: EmbeddingMatrix,
    tree: TaxonomyTree,
    leaf_labels: dict,
    split_assignment: dict,
    strategy: str,
) -> ClusterLevelResult:
    """Name each cluster with one representative training label.

    centroid: label of the train member nearest the train-member mean;
    medoid: label of the train member minimizing total distance to the other
    train members; majority: most frequent train label. All ties break
    toward the lexicographically smallest code. Clusters without train
    members get the global train-majority label, flagged as fallback.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    labels_at = level_labels(tree, leaf_labels)
    row_of = {sid: i for i, sid in enumerate(embeddings.stay_ids)}
    level = result.level

    all_train = [sid for sid in embeddings.stay_ids if split_assignment.get(sid) == "train"]
    if not all_train:
        raise NoTrainMembersAnywhere("train split is empty")
    global_majority = _majority_label([labels_at[sid][level] for sid in all_train])

    for cluster in result.clusters:
        train_members = [sid for sid in cluster.members if split_assignment.get(sid) == "train"]
        if not train_members:
            cluster.assigned_label = global_majority
            cluster.fallback = True
            continue
        cluster.fallback = False
        codes = [labels_at[sid][level] for sid in train_members]
        if strategy == "majority":
            cluster.assigned_label = _majority_label(codes)
            continue
        x = embeddings.vectors[[row_of[sid] for sid in train_members]]
        if strategy == "centroid":
            mu = x.mean(axis=0)
            dist = np.sqrt(((x - mu) ** 2).sum(axis=1))
        else:  # medoid
            diff = x[:, None, :] - x[None, :, :]
            dist = np.sqrt((diff * diff).sum(axis=2)).sum(axis=1)
        ranked = sorted(range(len(train_members)), key=lambda i: (dist[i], codes[i]))
        cluster.assigned_label = codes[ranked[0]]
    return result


def evaluate_assignment(
    result: ClusterLevelResult,
    tree: TaxonomyTree,
    leaf_labels: dict,
    split_assignment: dict,
    split: str = "test",
):
    """Top-1 accuracy of inherited cluster labels on one split."""
    labels_at = level_labels(tree, leaf_labels)
    level = result.level
    truth, assigned = [], []
    for cluster in result.clusters:
        for sid in cluster.members:
            if split_assignment.get(sid) != split:
                continue
            truth.append(labels_at[sid][level])
            assigned.append(cluster.assigned_label)
    if not truth:
        return float("nan")
    return accuracy(truth, assigned)
