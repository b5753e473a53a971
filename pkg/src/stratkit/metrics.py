"""Clustering evaluation metrics: v-measure, adjusted mutual information,
top-1 accuracy, and silhouette.

Entropies use natural logarithms throughout; v-measure is base-invariant and
AMI's mutual information and its expectation share the base, so the values
do not depend on that choice. AMI's expected MI is the exact sum over the
hypergeometric support of each contingency cell, computed with a
log-factorial table. The AMI normalizer is the arithmetic mean of the two
label entropies.
"""

import numpy as np

from .errors import (
    EmptyLabels,
    LengthMismatch,
    MissingClusterLabel,
    SingleCluster,
)


def contingency(labels_true, labels_pred):
    """r x c count matrix between true classes and predicted clusters."""
    if len(labels_true) != len(labels_pred):
        raise LengthMismatch(f"{len(labels_true)} true labels vs {len(labels_pred)} predicted")
    if len(labels_true) == 0:
        raise EmptyLabels("no labels")
    classes = {}
    clusters = {}
    for t in labels_true:
        classes.setdefault(t, len(classes))
    for p in labels_pred:
        clusters.setdefault(p, len(clusters))
    table = np.zeros((len(classes), len(clusters)), dtype=np.int64)
    for t, p in zip(labels_true, labels_pred):
        table[classes[t], clusters[p]] += 1
    return table


def _entropy(counts):
    counts = counts[counts > 0].astype(float)
    n = counts.sum()
    p = counts / n
    return float(-(p * np.log(p)).sum())


def _conditional_entropy(table, axis):
    """H(rows | cols) for axis=0, H(cols | rows) for axis=1."""
    n = table.sum()
    h = 0.0
    groups = table.T if axis == 0 else table
    for group in groups:
        total = group.sum()
        if total == 0:
            continue
        nz = group[group > 0].astype(float)
        h -= float((nz / n * np.log(nz / total)).sum())
    return h


def v_measure(labels_true, labels_pred):
    """Rosenberg-Hirschberg homogeneity/completeness/v.

    h = 1 - H(C|K)/H(C) (1 when H(C) = 0), c symmetric in K, and
    v = 2hc/(h+c) with v = 0 when h + c = 0.
    """
    table = contingency(labels_true, labels_pred)
    h_c = _entropy(table.sum(axis=1))
    h_k = _entropy(table.sum(axis=0))
    h_c_given_k = _conditional_entropy(table, axis=0)
    h_k_given_c = _conditional_entropy(table, axis=1)
    homogeneity = 1.0 if h_c == 0.0 else 1.0 - h_c_given_k / h_c
    completeness = 1.0 if h_k == 0.0 else 1.0 - h_k_given_c / h_k
    if homogeneity + completeness == 0.0:
        v = 0.0
    else:
        v = 2.0 * homogeneity * completeness / (homogeneity + completeness)
    return {"homogeneity": homogeneity, "completeness": completeness, "v": v}


def mutual_information(table):
    n = float(table.sum())
    a = table.sum(axis=1).astype(float)
    b = table.sum(axis=0).astype(float)
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = float(table[i, j])
            if nij > 0:
                mi += (nij / n) * np.log(n * nij / (a[i] * b[j]))
    return mi


def expected_mutual_information(table):
    """Exact E[MI] under the permutation (hypergeometric) null model.

    For each cell, sums (nij/n) log(n nij / (a_i b_j)) times the
    hypergeometric probability of nij over its feasible range.
    """
    a = table.sum(axis=1).astype(np.int64)
    b = table.sum(axis=0).astype(np.int64)
    n = int(table.sum())
    # log_fact[m] = log(m!)
    log_fact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, n + 1)))])
    emi = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1)
            term = (nij / n) * (np.log(n) + np.log(nij) - np.log(ai) - np.log(bj))
            log_prob = (
                log_fact[ai]
                + log_fact[bj]
                + log_fact[n - ai]
                + log_fact[n - bj]
                - log_fact[n]
                - log_fact[nij]
                - log_fact[ai - nij]
                - log_fact[bj - nij]
                - log_fact[n - ai - bj + nij]
            )
            emi += float((term * np.exp(log_prob)).sum())
    return emi


def _canonical(labels):
    seen = {}
    return [seen.setdefault(x, len(seen)) for x in labels]


def ami(labels_true, labels_pred):
    """Adjusted mutual information with the exact hypergeometric E[MI].

    AMI = (MI - E[MI]) / (mean(H(true), H(pred)) - E[MI]); identical
    partitions score 1.0 and a zero denominator is defined as 0.
    """
    if len(labels_true) != len(labels_pred):
        raise LengthMismatch(f"{len(labels_true)} true labels vs {len(labels_pred)} predicted")
    if len(labels_true) == 0:
        raise EmptyLabels("no labels")
    if _canonical(labels_true) == _canonical(labels_pred):
        return 1.0
    table = contingency(labels_true, labels_pred)
    mi = mutual_information(table)
    emi = expected_mutual_information(table)
    h_true = _entropy(table.sum(axis=1))
    h_pred = _entropy(table.sum(axis=0))
    denom = 0.5 * (h_true + h_pred) - emi
    if denom == 0.0:
        return 0.0
    return (mi - emi) / denom


def accuracy(labels_true, labels_assigned):
    """Fraction of items whose assigned cluster label equals the true label."""
    if len(labels_true) != len(labels_assigned):
        raise LengthMismatch(f"{len(labels_true)} true vs {len(labels_assigned)} assigned")
    if len(labels_true) == 0:
        raise EmptyLabels("no labels")
    for x in labels_assigned:
        if x is None:
            raise MissingClusterLabel("an item has no assigned cluster label")
    hits = sum(1 for t, p in zip(labels_true, labels_assigned) if t == p)
    return hits / len(labels_true)


def silhouette(vectors, assignments):
    """Mean over points of (b - a) / max(a, b) with Euclidean distances.

    Singleton-cluster points contribute 0, as does the 0/0 case when all
    distances coincide.
    """
    x = np.asarray(vectors, dtype=float)
    assign = np.asarray(assignments)
    cluster_ids = np.unique(assign)
    if cluster_ids.size < 2:
        raise SingleCluster("silhouette needs at least 2 clusters")
    n = x.shape[0]
    sq = (x * x).sum(axis=1)
    d = np.sqrt(np.maximum(sq[:, None] - 2.0 * x @ x.T + sq[None, :], 0.0))
    scores = np.zeros(n)
    members = {c: np.flatnonzero(assign == c) for c in cluster_ids}
    for i in range(n):
        own = members[assign[i]]
        if own.size <= 1:
            continue  # singleton contributes 0
        a = d[i, own].sum() / (own.size - 1)
        b = min(d[i, members[c]].mean() for c in cluster_ids if c != assign[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())
