"""Run-directory layout and atomic readers/writers for pipeline artifacts.

Every file carries a provenance comment (or JSON field) naming the
producing subcommand, the resolved-config hash, and the seed. Writes go to
a temp file first and are renamed into place. Floats are serialized with
repr so they round-trip exactly and repeated runs are byte-identical.
"""

import csv
import json
import os

import numpy as np

from .cohort import Cohort, StayRecord
from .embed_stat import EmbeddingMatrix
from .errors import ArtifactError, ValidationError
from .preprocess import EncodingSpec, ScalerParams
from .stratify import Cluster, ClusterLevelResult
from .taxonomy import TaxonomyTree, load_taxonomy

COHORT_DIR = "cohort"
PROCESSED_DIR = "processed"
EMBED_DIR = "embeddings"
REDUCED_DIR = "reduced"
CLUSTERS_DIR = "clusters"
RECORDS_DIR = "records"
REPORT_DIR = "report"
HPO_DIR = "hpo"


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def atomic_write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def atomic_write_lines(path, lines):
    atomic_write_text(path, "\n".join(lines) + "\n")


def _json_safe(value):
    """NaN/inf are not valid JSON; store them as null."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def atomic_write_json(path, payload):
    atomic_write_text(
        path, json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"
    )


def read_csv_rows(path):
    if not os.path.exists(path):
        raise ValidationError(f"missing file {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def fmt(value) -> str:
    return repr(float(value))


# ---------------------------------------------------------------- processed

def write_processed(run_dir, cohort: Cohort, split_assignment, scaler: ScalerParams,
                    encoding: EncodingSpec, provenance_line, provenance_obj):
    out = ensure_dir(os.path.join(run_dir, PROCESSED_DIR))
    feat_header = "stay_id,hour," + ",".join(cohort.feature_names)

    ts_lines = [f"# {provenance_line}", feat_header]
    obs_lines = [f"# {provenance_line}", feat_header]
    for stay in cohort.stays:
        observed = stay.pre_impute_mask
        for t in range(stay.series.shape[0]):
            vals = ",".join(fmt(v) for v in stay.series[t])
            ts_lines.append(f"{stay.stay_id},{t},{vals}")
            flags = ",".join("1" if observed[t, f] else "0" for f in range(observed.shape[1]))
            obs_lines.append(f"{stay.stay_id},{t},{flags}")
    atomic_write_lines(os.path.join(out, "timeseries.csv"), ts_lines)
    atomic_write_lines(os.path.join(out, "observed.csv"), obs_lines)

    st_lines = [f"# {provenance_line}", "stay_id," + ",".join(cohort.static_names)]
    for stay in cohort.stays:
        st_lines.append(stay.stay_id + "," + ",".join(fmt(v) for v in stay.statics))
    atomic_write_lines(os.path.join(out, "statics.csv"), st_lines)

    lb_lines = [f"# {provenance_line}", "stay_id,code"]
    for stay in cohort.stays:
        lb_lines.append(f"{stay.stay_id},{stay.label_code}")
    atomic_write_lines(os.path.join(out, "labels.csv"), lb_lines)

    sp_lines = [f"# {provenance_line}", "stay_id,split"]
    for stay in cohort.stays:
        sp_lines.append(f"{stay.stay_id},{split_assignment[stay.stay_id]}")
    atomic_write_lines(os.path.join(out, "split.csv"), sp_lines)

    atomic_write_json(
        os.path.join(out, "params.json"),
        {
            "provenance": provenance_obj,
            "scaler": scaler.to_dict(),
            "encoding": encoding.to_dict(),
        },
    )


def load_processed(run_dir):
    """Rebuild the processed cohort plus the persisted split assignment."""
    base = os.path.join(run_dir, PROCESSED_DIR)
    if not os.path.isdir(base):
        raise ValidationError(f"missing preprocessed cohort under {run_dir} (run preprocess first)")
    ts_rows = read_csv_rows(os.path.join(base, "timeseries.csv"))
    obs_rows = read_csv_rows(os.path.join(base, "observed.csv"))
    feature_names = ts_rows[0][2:]

    series_by_stay: dict[str, list] = {}
    order: list[str] = []
    for row in ts_rows[1:]:
        sid = row[0]
        if sid not in series_by_stay:
            series_by_stay[sid] = []
            order.append(sid)
        series_by_stay[sid].append([float(v) for v in row[2:]])
    observed_by_stay: dict[str, list] = {}
    for row in obs_rows[1:]:
        observed_by_stay.setdefault(row[0], []).append([c == "1" for c in row[2:]])

    st_rows = read_csv_rows(os.path.join(base, "statics.csv"))
    static_names = st_rows[0][1:]
    statics = {row[0]: np.array([float(v) for v in row[1:]]) for row in st_rows[1:]}

    labels = {row[0]: row[1] for row in read_csv_rows(os.path.join(base, "labels.csv"))[1:]}
    split_assignment = {row[0]: row[1] for row in read_csv_rows(os.path.join(base, "split.csv"))[1:]}

    stays = []
    for sid in order:
        series = np.array(series_by_stay[sid])
        observed = np.array(observed_by_stay[sid])
        if observed.shape != series.shape:
            raise ArtifactError(f"observed mask shape mismatch for stay {sid!r}")
        stays.append(
            StayRecord(
                stay_id=sid,
                series=series,
                mask=np.ones_like(observed),
                statics=statics[sid],
                label_code=labels[sid],
                pre_impute_mask=observed,
            )
        )
    cohort = Cohort(stays=stays, feature_names=feature_names, static_names=static_names)
    return cohort, split_assignment


# --------------------------------------------------------------- embeddings

def write_embeddings(run_dir, emb: EmbeddingMatrix, name, provenance_line):
    out = ensure_dir(os.path.join(run_dir, EMBED_DIR))
    lines = [f"# {provenance_line}"]
    lines.append("stay_id," + ",".join(f"dim_{i}" for i in range(emb.dim)))
    for sid, vec in zip(emb.stay_ids, emb.vectors):
        lines.append(sid + "," + ",".join(fmt(v) for v in vec))
    path = os.path.join(out, f"embeddings_{name}.csv")
    atomic_write_lines(path, lines)
    return path


def load_embeddings(run_dir, name) -> EmbeddingMatrix:
    path = os.path.join(run_dir, EMBED_DIR, f"embeddings_{name}.csv")
    if not os.path.exists(path):
        raise ValidationError(f"missing embeddings for {name!r} (run embed first): {path}")
    rows = read_csv_rows(path)
    stay_ids = [row[0] for row in rows[1:]]
    vectors = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return EmbeddingMatrix(stay_ids=stay_ids, vectors=vectors, provenance=name)


def write_loss_curve(run_dir, curve, name, provenance_line):
    out = ensure_dir(os.path.join(run_dir, EMBED_DIR))
    lines = [f"# {provenance_line}", "epoch,train_mse,val_mse"]
    for epoch, train_mse, val_mse in curve:
        lines.append(f"{epoch},{fmt(train_mse)},{fmt(val_mse)}")
    atomic_write_lines(os.path.join(out, f"loss_{name}.csv"), lines)


# ----------------------------------------------------------------- clusters

def write_clusters(run_dir, stem, stay_ids, assignments, provenance_line):
    out = ensure_dir(os.path.join(run_dir, CLUSTERS_DIR))
    lines = [f"# {provenance_line}", "stay_id,cluster_id"]
    for sid, cid in zip(stay_ids, assignments):
        lines.append(f"{sid},{int(cid)}")
    path = os.path.join(out, f"{stem}.csv")
    atomic_write_lines(path, lines)
    return path


def load_clusters(run_dir, stem):
    path = os.path.join(run_dir, CLUSTERS_DIR, f"{stem}.csv")
    if not os.path.exists(path):
        raise ValidationError(f"missing clusters file {path}")
    rows = read_csv_rows(path)
    return {row[0]: int(row[1]) for row in rows[1:]}


def clusters_to_result(level, assignment_by_stay) -> ClusterLevelResult:
    members: dict[int, list] = {}
    for sid, cid in assignment_by_stay.items():
        members.setdefault(cid, []).append(sid)
    clusters = [Cluster(cluster_id=cid, members=members[cid]) for cid in sorted(members)]
    return ClusterLevelResult(level=level, clusters=clusters)


def write_cluster_labels(run_dir, stem, result: ClusterLevelResult, provenance_line):
    out = ensure_dir(os.path.join(run_dir, CLUSTERS_DIR))
    lines = [f"# {provenance_line}", "cluster_id,label,fallback"]
    for cluster in result.clusters:
        lines.append(f"{cluster.cluster_id},{cluster.assigned_label},{str(cluster.fallback).lower()}")
    path = os.path.join(out, f"{stem}.csv")
    atomic_write_lines(path, lines)
    return path


def load_cluster_labels(run_dir, stem):
    path = os.path.join(run_dir, CLUSTERS_DIR, f"{stem}.csv")
    if not os.path.exists(path):
        raise ValidationError(f"missing cluster labels file {path} (run assign-labels first)")
    rows = read_csv_rows(path)
    return {int(row[0]): (row[1], row[2] == "true") for row in rows[1:]}


# ------------------------------------------------------------------ records

def write_record(run_dir, name, payload):
    out = ensure_dir(os.path.join(run_dir, RECORDS_DIR))
    atomic_write_json(os.path.join(out, f"{name}.json"), payload)


def load_run_taxonomy(run_dir) -> TaxonomyTree:
    path = os.path.join(run_dir, COHORT_DIR, "taxonomy.tsv")
    if not os.path.exists(path):
        raise ValidationError(f"missing taxonomy at {path} (run ingest first)")
    return load_taxonomy(path)
