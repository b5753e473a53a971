"""Pipeline orchestration CLI.

Subcommands: synth, ingest, preprocess, embed, reduce, cluster, stratify,
rediscover, assign-labels, evaluate, hpo, report. Exit codes: 0 success,
1 validation error, 2 internal error. All outputs are written atomically
and carry provenance (subcommand, config hash, seed).
"""

import argparse
import os
import sys

import numpy as np

from . import CONFIG_SCHEMA_VERSION, __version__, artifacts
from .cohort import IngestConfig, ingest, restrict_to_codes, select_top_codes, split, write_cohort_csvs
from .config import RunConfig, load_config
from .embed_stat import EmbeddingMatrix, StatConfig, embed_stat
from .errors import ArtifactError, StratkitError, ValidationError
from .hpo import SearchSpace, hpo_run, trials_csv_lines
from .kmeans import kmeans_fit
from .preprocess import run_pipeline
from .report import build_report, load_records, render_figures, report_csv_lines
from .rnn import RnnConfig, embed_rnn, save_model, train
from .seeding import stable_hash64
from .stratify import (
    STRATEGIES,
    assign_cluster_labels,
    evaluate_assignment,
    rediscover,
    stratify_flat,
)
from .synth import SynthConfig, generate_cohort, generate_taxonomy
from .taxonomy import load_taxonomy, write_taxonomy
from .tsne import TsneConfig, tsne_fit

EMBEDDERS = ("stat", "gru", "lstm")


class UsageError(ValidationError):
    pass


class Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad flags; the CLI contract wants 1."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _provenance(args, config: RunConfig):
    line = f"stratkit {args.command} config_hash={config.hash()} seed={config.seed}"
    obj = {
        "subcommand": args.command,
        "config_hash": config.hash(),
        "seed": config.seed,
        "version": __version__,
    }
    return line, obj


def _resolve_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides[("run", "seed")] = args.seed
    if getattr(args, "threads", None) is not None:
        overrides[("run", "threads")] = args.threads
    return load_config(getattr(args, "config", None), overrides)


def _tsne_config(config: RunConfig, seed, perplexity=None, out_dims=None):
    return TsneConfig(
        out_dims=out_dims if out_dims is not None else config.get("tsne", "out_dims"),
        perplexity=perplexity if perplexity is not None else config.get("tsne", "perplexity"),
        iterations=config.get("tsne", "iterations"),
        learning_rate=config.get("tsne", "learning_rate"),
        early_exaggeration=config.get("tsne", "early_exaggeration"),
        seed=seed,
    )


def _rnn_config(config: RunConfig, cell) -> RnnConfig:
    e = config.values["embed"]
    return RnnConfig(
        cell=cell,
        hidden_size=e["hidden_size"],
        per_feature=e["per_feature"],
        per_feature_hidden=e["per_feature_hidden"],
        epochs=e["epochs"],
        batch_size=e["batch_size"],
        learning_rate=e["learning_rate"],
        weight_decay=e["weight_decay"],
        beta1=e["beta1"],
        beta2=e["beta2"],
        eps=e["eps"],
        grad_clip_norm=e["grad_clip_norm"],
        seed=config.seed,
    )


def _maybe_reduce(emb, args, config):
    """Optional t-SNE stage before clustering; returns (vectors, used_tsne)."""
    if not getattr(args, "tsne", False):
        return emb.vectors, False
    cfg = _tsne_config(
        config,
        seed=stable_hash64(config.seed, "reduce", emb.provenance),
        perplexity=getattr(args, "perplexity", None),
    )
    return tsne_fit(emb.vectors, cfg).layout, True


# ------------------------------------------------------------- subcommands

def cmd_synth(args, config: RunConfig):
    line, _ = _provenance(args, config)
    s = config.values["synth"]
    synth_cfg = SynthConfig(
        branching=tuple(s["branching"]),
        n_stays=s["n_stays"],
        n_features=s["n_features"],
        n_statics=s["n_statics"],
        hours=s["hours"],
        signal_strengths=tuple(s["signal_strengths"]),
        noise_std=s["noise_std"],
        ar_coefficient=s["ar_coefficient"],
        missing_rate=s["missing_rate"],
        zipf_exponent=s["zipf_exponent"],
        seed=config.seed,
    )
    tree = generate_taxonomy(synth_cfg)
    cohort = generate_cohort(synth_cfg, tree)
    artifacts.ensure_dir(args.out_dir)
    write_cohort_csvs(cohort, args.out_dir, provenance=line)
    write_taxonomy(tree, os.path.join(args.out_dir, "taxonomy.tsv"), provenance=line)
    print(f"wrote {len(cohort)} stays to {args.out_dir}")
    return 0


def cmd_ingest(args, config: RunConfig):
    line, _ = _provenance(args, config)
    taxonomy_path = args.taxonomy or os.path.join(args.data_dir, "taxonomy.tsv")
    tree = load_taxonomy(taxonomy_path)
    cohort = ingest(
        os.path.join(args.data_dir, "timeseries.csv"),
        os.path.join(args.data_dir, "static.csv"),
        os.path.join(args.data_dir, "labels.csv"),
        IngestConfig(
            max_hours=config.get("cohort", "max_hours"),
            resample=config.get("cohort", "resample"),
        ),
    )
    leaves = tree.codes_at_level(4)
    for stay in cohort.stays:
        if stay.label_code not in leaves:
            raise ValidationError(f"stay {stay.stay_id!r} label {stay.label_code!r} is not a level-4 code")
    top_n = config.get("cohort", "top_codes")
    if top_n:
        cohort = restrict_to_codes(cohort, select_top_codes(cohort, top_n))
    out = artifacts.ensure_dir(os.path.join(args.run_dir, artifacts.COHORT_DIR))
    write_cohort_csvs(cohort, out, provenance=line)
    write_taxonomy(tree, os.path.join(out, "taxonomy.tsv"), provenance=line)
    print(f"ingested {len(cohort)} stays into {out}")
    return 0


def cmd_preprocess(args, config: RunConfig):
    line, obj = _provenance(args, config)
    base = os.path.join(args.run_dir, artifacts.COHORT_DIR)
    if not os.path.isdir(base):
        raise ValidationError(f"missing ingested cohort under {args.run_dir} (run ingest first)")
    cohort = ingest(
        os.path.join(base, "timeseries.csv"),
        os.path.join(base, "static.csv"),
        os.path.join(base, "labels.csv"),
        IngestConfig(max_hours=config.get("cohort", "max_hours")),
    )
    assignment = split(cohort, ratios=config.ratios(), seed=config.seed)
    processed, scaler, encoding = run_pipeline(cohort, assignment, config.categorical_statics())
    artifacts.write_processed(args.run_dir, processed, assignment, scaler, encoding, line, obj)
    print(f"preprocessed {len(processed)} stays")
    return 0


def cmd_embed(args, config: RunConfig):
    line, _ = _provenance(args, config)
    cohort, assignment = artifacts.load_processed(args.run_dir)
    if args.method == "stat":
        emb = embed_stat(
            cohort,
            StatConfig(
                n_windows=config.get("embed", "stat_windows"),
                include_statics=config.get("embed", "include_statics"),
            ),
        )
    else:
        rnn_cfg = _rnn_config(config, args.method)
        model, curve = train(cohort, assignment, rnn_cfg)
        artifacts.write_loss_curve(args.run_dir, curve, args.method, line)
        save_model(model, os.path.join(args.run_dir, artifacts.EMBED_DIR, f"model_{args.method}.json"), line)
        emb = embed_rnn(model, cohort)
    path = artifacts.write_embeddings(args.run_dir, emb, args.method, line)
    print(f"wrote {path} (d={emb.dim})")
    return 0


def cmd_reduce(args, config: RunConfig):
    line, _ = _provenance(args, config)
    emb = artifacts.load_embeddings(args.run_dir, args.embedder)
    cfg = _tsne_config(
        config,
        seed=stable_hash64(config.seed, "reduce", args.embedder),
        perplexity=args.perplexity,
        out_dims=args.out_dims,
    )
    result = tsne_fit(emb.vectors, cfg)
    out = artifacts.ensure_dir(os.path.join(args.run_dir, artifacts.REDUCED_DIR))
    lines = [f"# {line}"]
    lines.append("stay_id," + ",".join(f"dim_{i}" for i in range(result.layout.shape[1])))
    for sid, vec in zip(emb.stay_ids, result.layout):
        lines.append(sid + "," + ",".join(artifacts.fmt(v) for v in vec))
    path = os.path.join(out, f"tsne_{args.embedder}.csv")
    artifacts.atomic_write_lines(path, lines)
    print(f"wrote {path} (KL {result.kl_initial:.4f} -> {result.kl_final:.4f})")
    return 0


def cmd_cluster(args, config: RunConfig):
    line, _ = _provenance(args, config)
    emb = artifacts.load_embeddings(args.run_dir, args.embedder)
    vectors, used_tsne = _maybe_reduce(emb, args, config)
    result = kmeans_fit(
        vectors,
        args.k,
        seed=stable_hash64(config.seed, "cluster", args.embedder, args.k),
        max_iter=config.get("kmeans", "max_iter"),
        tol=config.get("kmeans", "tol"),
        n_init=config.get("kmeans", "n_init"),
    )
    stem = f"clusters_{args.embedder}_k{args.k}" + ("_tsne" if used_tsne else "")
    path = artifacts.write_clusters(args.run_dir, stem, emb.stay_ids, result.assignments, line)
    print(f"wrote {path} (inertia={result.inertia:.4f})")
    return 0


def _load_eval_inputs(args):
    cohort, assignment = artifacts.load_processed(args.run_dir)
    tree = artifacts.load_run_taxonomy(args.run_dir)
    return cohort, assignment, tree, cohort.labels()


def cmd_stratify(args, config: RunConfig):
    line, obj = _provenance(args, config)
    _, _, tree, labels = _load_eval_inputs(args)
    emb = artifacts.load_embeddings(args.run_dir, args.embedder)
    vectors, used_tsne = _maybe_reduce(emb, args, config)
    work = EmbeddingMatrix(emb.stay_ids, vectors, emb.provenance)
    result, scores = stratify_flat(work, tree, labels, args.level, k=args.k, seed=config.seed)
    stem = f"flat_{args.embedder}_L{args.level}"
    artifacts.write_clusters(
        args.run_dir, stem, emb.stay_ids,
        [result.assignment_by_stay()[sid] for sid in emb.stay_ids], line,
    )
    record = {
        "task": "flat",
        "level": args.level,
        "embedder": args.embedder,
        "strategy": None,
        "k": scores["k"],
        "used_tsne": used_tsne,
        "metrics": {m: scores[m] for m in ("v_measure", "homogeneity", "completeness", "ami", "silhouette")},
        "n_evaluated_clusters": len(result.clusters),
        "n_skipped_clusters": 0,
        "provenance": obj,
    }
    artifacts.write_record(args.run_dir, stem, record)
    print(f"flat L{args.level} {args.embedder}: v={scores['v_measure']:.4f} ami={scores['ami']:.4f}")
    return 0


def cmd_rediscover(args, config: RunConfig):
    line, obj = _provenance(args, config)
    _, _, tree, labels = _load_eval_inputs(args)
    emb = artifacts.load_embeddings(args.run_dir, args.embedder)
    vectors, used_tsne = _maybe_reduce(emb, args, config)
    work = EmbeddingMatrix(emb.stay_ids, vectors, emb.provenance)
    levels, transitions = rediscover(
        work, tree, labels, seed=config.seed,
        min_cluster_size=config.get("stratify", "min_cluster_size"),
    )
    for level_result in levels:
        stem = f"rediscover_{args.embedder}_L{level_result.level}"
        by_stay = level_result.assignment_by_stay()
        ids = [sid for sid in emb.stay_ids if sid in by_stay]
        artifacts.write_clusters(args.run_dir, stem, ids, [by_stay[sid] for sid in ids], line)
    records = []
    for transition, stats in transitions.items():
        records.append(
            {
                "task": "rediscover",
                "transition": transition,
                "embedder": args.embedder,
                "strategy": "majority",
                "k": None,
                "used_tsne": used_tsne,
                "metrics": {"accuracy_top1": stats["accuracy_top1"]},
                "n_evaluated_clusters": stats["n_evaluated_clusters"],
                "n_skipped_clusters": stats["n_skipped_clusters"],
                "provenance": obj,
            }
        )
    artifacts.write_record(args.run_dir, f"rediscover_{args.embedder}", records)
    summary = ", ".join(f"{t}={s['accuracy_top1']:.3f}" for t, s in transitions.items())
    print(f"rediscover {args.embedder}: {summary}")
    return 0


def cmd_assign_labels(args, config: RunConfig):
    line, _ = _provenance(args, config)
    _, assignment, tree, labels = _load_eval_inputs(args)
    emb = artifacts.load_embeddings(args.run_dir, args.embedder)
    stem = f"flat_{args.embedder}_L{args.level}"
    clusters = artifacts.load_clusters(args.run_dir, stem)
    result = artifacts.clusters_to_result(args.level, clusters)
    assign_cluster_labels(result, emb, tree, labels, assignment, args.strategy)
    path = artifacts.write_cluster_labels(
        args.run_dir, f"labels_{args.embedder}_L{args.level}_{args.strategy}", result, line
    )
    print(f"wrote {path}")
    return 0


def cmd_evaluate(args, config: RunConfig):
    _, obj = _provenance(args, config)
    _, assignment, tree, labels = _load_eval_inputs(args)
    stem = f"flat_{args.embedder}_L{args.level}"
    clusters = artifacts.load_clusters(args.run_dir, stem)
    result = artifacts.clusters_to_result(args.level, clusters)
    label_map = artifacts.load_cluster_labels(
        args.run_dir, f"labels_{args.embedder}_L{args.level}_{args.strategy}"
    )
    for cluster in result.clusters:
        cluster.assigned_label, cluster.fallback = label_map[cluster.cluster_id]
    acc = evaluate_assignment(result, tree, labels, assignment, split=args.split)
    record = {
        "task": "assign",
        "level": args.level,
        "embedder": args.embedder,
        "strategy": args.strategy,
        "k": len(result.clusters),
        "used_tsne": False,
        "metrics": {"accuracy_top1": acc},
        "n_evaluated_clusters": len(result.clusters),
        "n_skipped_clusters": 0,
        "provenance": obj,
    }
    artifacts.write_record(args.run_dir, f"assign_{args.embedder}_L{args.level}_{args.strategy}", record)
    print(f"assign {args.strategy} L{args.level} {args.embedder}: accuracy={acc:.4f}")
    return 0


def cmd_hpo(args, config: RunConfig):
    line, obj = _provenance(args, config)
    _, assignment, tree, labels = _load_eval_inputs(args)
    emb = artifacts.load_embeddings(args.run_dir, args.embedder)
    space = SearchSpace(
        k_min=config.get("hpo", "k_min"),
        k_max=config.get("hpo", "k_max"),
        perplexity_min=config.get("hpo", "perplexity_min"),
        perplexity_max=config.get("hpo", "perplexity_max"),
    )
    best, trials = hpo_run(
        emb, tree, labels, args.level, assignment,
        space=space, n_trials=config.get("hpo", "n_trials"), seed=config.seed,
    )
    out = artifacts.ensure_dir(os.path.join(args.run_dir, artifacts.HPO_DIR))
    artifacts.atomic_write_lines(
        os.path.join(out, f"trials_{args.embedder}_L{args.level}.csv"),
        trials_csv_lines(trials, provenance=line),
    )
    record = {
        "task": "hpo",
        "level": args.level,
        "embedder": args.embedder,
        "strategy": None,
        "k": best.k if best else None,
        "used_tsne": best.use_tsne if best else None,
        "metrics": {"objective_v_measure": best.objective if best else float("nan")},
        "n_evaluated_clusters": sum(1 for t in trials if t.status == "ok"),
        "n_skipped_clusters": sum(1 for t in trials if t.status != "ok"),
        "hpo": "random",
        "n_trials": len(trials),
        "provenance": obj,
    }
    artifacts.write_record(args.run_dir, f"hpo_{args.embedder}_L{args.level}", record)
    if best:
        print(f"hpo best: trial={best.trial} k={best.k} tsne={best.use_tsne} objective={best.objective:.4f}")
    else:
        print("hpo: no successful trials")
    return 0


def cmd_report(args, config: RunConfig):
    line, obj = _provenance(args, config)
    records = load_records(os.path.join(args.run_dir, artifacts.RECORDS_DIR))
    out = artifacts.ensure_dir(os.path.join(args.run_dir, artifacts.REPORT_DIR))
    payload = build_report(records, config.to_dict(), obj)
    artifacts.atomic_write_json(os.path.join(out, "report.json"), payload)
    artifacts.atomic_write_lines(os.path.join(out, "report.csv"), report_csv_lines(records, line))
    figures = render_figures(payload["records"], out)
    print(f"wrote report.json, report.csv and {len(figures)} figure(s) to {out}")
    for record in payload["records"]:
        level = record.get("level", record.get("transition", ""))
        name = f"{record['task']} {level} {record.get('embedder', '')}".strip()
        strat = record.get("strategy")
        if strat:
            name += f" [{strat}]"
        metrics = " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(record["metrics"].items()))
        print(f"  {name}: {metrics}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> Parser:
    parser = Parser(prog="stratkit", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"stratkit {__version__} (config schema v{CONFIG_SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run_dir=True):
        p.add_argument("--config", default=None, help="sectioned key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--threads", type=int, default=None, help="cap worker threads")
        if run_dir:
            p.add_argument("--run-dir", required=True, help="pipeline working directory")

    p = sub.add_parser("synth", help="generate a synthetic cohort with a planted taxonomy signal")
    common(p, run_dir=False)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate cohort CSVs and canonicalize them into the run dir")
    common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--taxonomy", default=None, help="taxonomy.tsv path (default: <data-dir>/taxonomy.tsv)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="split, scale, impute, and encode the ingested cohort")
    common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("embed", help="produce stay embeddings (stat is training-free)")
    common(p)
    p.add_argument("--method", required=True, choices=EMBEDDERS)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("reduce", help="t-SNE reduction of stored embeddings")
    common(p)
    p.add_argument("--embedder", required=True, choices=EMBEDDERS)
    p.add_argument("--perplexity", type=float, default=None)
    p.add_argument("--out-dims", type=int, default=None)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("cluster", help="k-means over stored embeddings")
    common(p)
    p.add_argument("--embedder", required=True, choices=EMBEDDERS)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--tsne", action="store_true")
    p.add_argument("--perplexity", type=float, default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("stratify", help="flat stratification at one taxonomy level")
    common(p)
    p.add_argument("--embedder", required=True, choices=EMBEDDERS)
    p.add_argument("--level", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--tsne", action="store_true")
    p.add_argument("--perplexity", type=float, default=None)
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("rediscover", help="iterative hierarchical rediscovery, levels 1..4")
    common(p)
    p.add_argument("--embedder", required=True, choices=EMBEDDERS)
    p.add_argument("--tsne", action="store_true")
    p.add_argument("--perplexity", type=float, default=None)
    p.set_defaults(func=cmd_rediscover)

    p = sub.add_parser("assign-labels", help="name flat clusters from train-split labels")
    common(p)
    p.add_argument("--embedder", required=True, choices=EMBEDDERS)
    p.add_argument("--level", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.set_defaults(func=cmd_assign_labels)

    p = sub.add_parser("evaluate", help="top-1 accuracy of assigned cluster labels on a split")
    common(p)
    p.add_argument("--embedder", required=True, choices=EMBEDDERS)
    p.add_argument("--level", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("hpo", help="seeded random search over k and t-SNE parameters")
    common(p)
    p.add_argument("--embedder", required=True, choices=EMBEDDERS)
    p.add_argument("--level", type=int, required=True, choices=(1, 2, 3, 4))
    p.set_defaults(func=cmd_hpo)

    p = sub.add_parser("report", help="aggregate records into report.json, CSV, and figures")
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def run_subcommand(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    return args.func(args, config)


def main(argv=None) -> int:
    try:
        return run_subcommand(argv if argv is not None else sys.argv[1:])
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArtifactError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except StratkitError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
