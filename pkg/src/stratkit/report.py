"""Aggregate evaluation records into report.json, a plot-ready CSV, and
matplotlib figures rendered alongside the delimited output."""

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ArtifactError, NoResults


def load_records(records_dir):
    """Every records/*.json holds one record object or a list of them."""
    records = []
    if not os.path.isdir(records_dir):
        raise NoResults(f"no records directory at {records_dir}")
    for fname in sorted(os.listdir(records_dir)):
        if not fname.endswith(".json"):
            continue
        path = os.path.join(records_dir, fname)
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except (json.JSONDecodeError, OSError) as exc:
            raise ArtifactError(f"malformed record file {path}: {exc}") from exc
        items = payload if isinstance(payload, list) else [payload]
        for item in items:
            if "task" not in item or "metrics" not in item:
                raise ArtifactError(f"malformed record file {path}: missing task/metrics")
            records.append(item)
    if not records:
        raise NoResults(f"no evaluation records in {records_dir}")
    return records


def _sort_key(record):
    return (
        record.get("task", ""),
        str(record.get("level", record.get("transition", ""))),
        record.get("embedder", ""),
        record.get("strategy") or "",
    )


def build_report(records, config_dict, provenance):
    records = sorted(records, key=_sort_key)
    return {
        "provenance": provenance,
        "config": config_dict,
        "n_records": len(records),
        "records": records,
    }


def report_csv_lines(records, provenance_line=None):
    lines = []
    if provenance_line:
        lines.append(f"# {provenance_line}")
    lines.append("task,level,embedder,strategy,metric,value")
    for record in sorted(records, key=_sort_key):
        level = record.get("level", record.get("transition", ""))
        strategy = record.get("strategy") or ""
        embedder = record.get("embedder", "")
        for metric in sorted(record["metrics"]):
            value = record["metrics"][metric]
            rendered = "" if value is None else repr(value)
            lines.append(f"{record['task']},{level},{embedder},{strategy},{metric},{rendered}")
    return lines


def _grouped_bars(ax, group_labels, series, width=0.8):
    """series: list of (name, values aligned to group_labels)."""
    n_series = len(series)
    for s, (name, values) in enumerate(series):
        offsets = [g + width * (s + 0.5) / n_series - width / 2 for g in range(len(group_labels))]
        ax.bar(offsets, values, width=width / n_series, label=name)
    ax.set_xticks(range(len(group_labels)))
    ax.set_xticklabels(group_labels)
    ax.legend(fontsize=8)


def render_figures(records, out_dir):
    """One figure per task family with data present; returns written paths."""
    written = []

    flat = [r for r in records if r["task"] == "flat"]
    if flat:
        levels = sorted({r["level"] for r in flat})
        embedders = sorted({r["embedder"] for r in flat})
        fig, ax = plt.subplots(figsize=(6, 3.5))
        series = []
        for emb in embedders:
            by_level = {r["level"]: r["metrics"].get("v_measure") for r in flat if r["embedder"] == emb}
            series.append((emb, [by_level.get(lv, 0.0) or 0.0 for lv in levels]))
        _grouped_bars(ax, [f"L{lv}" for lv in levels], series)
        ax.set_ylabel("v-measure")
        ax.set_title("Flat stratification by taxonomy level")
        path = os.path.join(out_dir, "fig_flat_v_measure.png")
        fig.tight_layout()
        fig.savefig(path, dpi=150, metadata={"Software": None})
        plt.close(fig)
        written.append(path)

    assign = [r for r in records if r["task"] == "assign"]
    if assign:
        levels = sorted({r["level"] for r in assign})
        combos = sorted({(r["embedder"], r["strategy"]) for r in assign})
        fig, ax = plt.subplots(figsize=(6, 3.5))
        series = []
        for emb, strat in combos:
            by_level = {
                r["level"]: r["metrics"].get("accuracy_top1")
                for r in assign
                if r["embedder"] == emb and r["strategy"] == strat
            }
            series.append((f"{emb}/{strat}", [by_level.get(lv, 0.0) or 0.0 for lv in levels]))
        _grouped_bars(ax, [f"L{lv}" for lv in levels], series)
        ax.set_ylabel("top-1 accuracy")
        ax.set_title("Cluster label assignment by strategy")
        path = os.path.join(out_dir, "fig_assign_accuracy.png")
        fig.tight_layout()
        fig.savefig(path, dpi=150, metadata={"Software": None})
        plt.close(fig)
        written.append(path)

    redis = [r for r in records if r["task"] == "rediscover"]
    if redis:
        transitions = sorted({r["transition"] for r in redis})
        embedders = sorted({r["embedder"] for r in redis})
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for emb in embedders:
            by_tr = {
                r["transition"]: r["metrics"].get("accuracy_top1")
                for r in redis
                if r["embedder"] == emb
            }
            values = [
                by_tr[tr] if by_tr.get(tr) is not None else float("nan") for tr in transitions
            ]
            ax.plot(range(len(transitions)), values, marker="o", label=emb)
        ax.set_xticks(range(len(transitions)))
        ax.set_xticklabels(transitions)
        ax.set_ylabel("top-1 accuracy")
        ax.set_title("Hierarchy rediscovery transitions")
        ax.legend(fontsize=8)
        path = os.path.join(out_dir, "fig_rediscovery.png")
        fig.tight_layout()
        fig.savefig(path, dpi=150, metadata={"Software": None})
        plt.close(fig)
        written.append(path)

    return written
