"""Command-line surface: embedding export, training, evaluation, prediction,
ablations, and metric computation from raw confusion matrices.

Every failure exits non-zero with a single `error: ...` line on stderr.
Output files are pure functions of (argv, input files, seed); the only
timestamp lives in the report header field `generated_at`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import checkpoint as ckpt_mod
from . import graphs as graphs_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import store as store_mod
from . import training as training_mod
from .config import ConfigFileError, load_run_config


class CliError(Exception):
    """User-facing command failures."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed-fallback", help="build a fallback embedding store for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=store_mod.DEFAULT_EMBED_SEED)
    p.add_argument("--debug-jsonl", default=None, help="also write a human-readable JSON-lines twin")

    for name in ("train", "ablate"):
        p = sub.add_parser(name, help=f"{name} on a dataset (layer search + training + test metrics)")
        if name == "ablate":
            p.add_argument("--variant", required=True, choices=("no_image", "no_multihead", "no_fusion"))
        p.add_argument("--data", required=True)
        p.add_argument("--embeddings", required=True)
        p.add_argument("--config", default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--report", required=True)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on the dataset's test partition")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("predict", help="classify a single record")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--input", required=True)

    p = sub.add_parser("metrics", help="compute metrics from a raw confusion matrix")
    p.add_argument("--confusion", required=True)

    p = sub.add_parser("info", help="print checkpoint metadata")
    p.add_argument("--model", required=True)
    return parser


def _load_schema_for(data_path: str, config_schema: str, fallback_labels=None) -> graphs_mod.DatasetSchema:
    if config_schema:
        return graphs_mod.load_schema(config_schema)
    sidecar = data_path + ".labels"
    if os.path.exists(sidecar):
        return graphs_mod.load_schema(sidecar)
    if fallback_labels:
        return graphs_mod.DatasetSchema(list(fallback_labels))
    raise CliError(f"no schema: set 'schema' in the config or provide '{sidecar}'")


def _build_graphs(records, store, include_image: bool, comment_edges: str):
    return [
        graphs_mod.build_graph(r, store, store.dim, include_image=include_image, comment_edges=comment_edges)
        for r in records
    ]


def _write_report(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def _report_payload(dataset, split_sizes, best_n, history, report, layer_search=None) -> dict:
    return {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "dataset": dataset,
        "split_sizes": split_sizes,
        "best_n": best_n,
        "history": history,
        "confusion": report.matrix.to_lists(),
        "metrics": report.to_dict(),
        "layer_search": layer_search or [],
    }


def _cmd_embed_fallback(args) -> int:
    records = graphs_mod.parse_dataset(args.data, schema=None)
    store = store_mod.build_fallback_store(records, args.dim, args.seed)
    store_mod.write_meb(args.out, store)
    if args.debug_jsonl:
        store_mod.write_jsonl_store(args.debug_jsonl, store)
    print(f"wrote {len(store)} rows of dim {store.dim} to {args.out}")
    return 0


def _cmd_train(args, variant: str | None = None) -> int:
    run_cfg = load_run_config(args.config)
    if variant is not None:
        run_cfg.variant = variant
    schema = _load_schema_for(args.data, run_cfg.schema)
    records = graphs_mod.parse_dataset(args.data, schema)
    store = store_mod.read_meb(args.embeddings)
    model_cfg = model_mod.ablation_variant(run_cfg.model_config(), run_cfg.variant)
    train_recs, val_recs, test_recs = graphs_mod.split_dataset(
        records, seed=run_cfg.seed, test_ratio=run_cfg.test_ratio, val_ratio=run_cfg.val_ratio
    )
    to_graphs = lambda recs: _build_graphs(recs, store, model_cfg.include_image, model_cfg.comment_edges)
    train_graphs, val_graphs, test_graphs = to_graphs(train_recs), to_graphs(val_recs), to_graphs(test_recs)
    best_n, best_model, search_report = model_mod.search_layers(
        model_cfg, run_cfg.train_config(), train_graphs, val_graphs, schema.num_classes, log=print
    )
    test_report = training_mod.evaluate(best_model, test_graphs)
    history = _best_history(search_report, best_n)
    ckpt_mod.save_checkpoint(
        args.out,
        best_model,
        labels=schema.labels,
        best_n=best_n,
        extra={
            "dataset": args.data,
            "variant": run_cfg.variant,
            "test_ratio": run_cfg.test_ratio,
            "val_ratio": run_cfg.val_ratio,
        },
    )
    _write_report(
        args.report,
        _report_payload(
            args.data,
            {"train": len(train_graphs), "validation": len(val_graphs), "test": len(test_graphs)},
            best_n,
            history,
            test_report,
            layer_search=[
                {"n": c.n, "val_accuracy": c.val_accuracy, "diverged": c.diverged}
                for c in search_report
            ],
        ),
    )
    print(f"best_n={best_n} test_accuracy={test_report.accuracy:.4f}")
    return 0


def _best_history(search_report, best_n):
    for candidate in search_report:
        if candidate.n == best_n:
            return candidate.history
    return []


def _cmd_evaluate(args) -> int:
    loaded = ckpt_mod.load_checkpoint(args.model)
    schema = _load_schema_for(args.data, "", fallback_labels=loaded.labels)
    if schema.num_classes != loaded.model.num_classes:
        raise CliError(
            f"checkpoint has {loaded.model.num_classes} classes but the dataset schema has "
            f"{schema.num_classes}"
        )
    records = graphs_mod.parse_dataset(args.data, schema)
    store = store_mod.read_meb(args.embeddings)
    cfg = loaded.model.config
    _, _, test_recs = graphs_mod.split_dataset(
        records,
        seed=cfg.seed,
        test_ratio=loaded.extra.get("test_ratio", 0.2),
        val_ratio=loaded.extra.get("val_ratio", 0.2),
    )
    test_graphs = _build_graphs(test_recs, store, cfg.include_image, cfg.comment_edges)
    report = training_mod.evaluate(loaded.model, test_graphs)
    _write_report(
        args.report,
        _report_payload(
            args.data,
            {"train": len(records) - len(test_recs), "validation": 0, "test": len(test_recs)},
            loaded.best_n,
            [],
            report,
        ),
    )
    print(report.to_text())
    return 0


def _cmd_predict(args) -> int:
    loaded = ckpt_mod.load_checkpoint(args.model)
    store = store_mod.read_meb(args.embeddings)
    with open(args.input, "r", encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if len(lines) != 1:
        raise CliError(f"expected exactly one record in {args.input}, found {len(lines)}")
    record = graphs_mod.parse_record(json.loads(lines[0]), schema=None)
    cfg = loaded.model.config
    graph = graphs_mod.build_graph(
        record, store, store.dim, include_image=cfg.include_image, comment_edges=cfg.comment_edges
    )
    gb = graphs_mod.batch([graph])
    _, probs = model_mod.forward(loaded.model, gb, training=False)
    labels = loaded.labels or [str(i) for i in range(loaded.model.num_classes)]
    winner = int(np.argmax(probs.data[0]))
    print(f"prediction: {labels[winner]}")
    for name, p in zip(labels, probs.data[0]):
        print(f"probability[{name}]: {p:.6f}")
    return 0


def _cmd_metrics(args) -> int:
    with open(args.confusion, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        counts = np.asarray(raw, dtype=np.int64)
    except (ValueError, TypeError):
        raise CliError(f"{args.confusion} does not hold a rectangular integer matrix") from None
    print(metrics_mod.metrics(metrics_mod.ConfusionMatrix(counts)).to_text())
    return 0


def _cmd_info(args) -> int:
    loaded = ckpt_mod.load_checkpoint(args.model)
    model = loaded.model
    print(f"best_n: {loaded.best_n}")
    print(f"layers: {model.n_layers}")
    print(f"input_dim: {model.input_dim}")
    print(f"hidden_dim: {model.hidden_dim}")
    print(f"num_classes: {model.num_classes}")
    print(f"labels: {','.join(loaded.labels) if loaded.labels else '-'}")
    print(f"variant: {loaded.extra.get('variant', 'full')}")
    return 0


_HANDLED = (
    CliError,
    ConfigFileError,
    ckpt_mod.CheckpointError,
    graphs_mod.DatasetError,
    metrics_mod.MetricsError,
    model_mod.ConfigError,
    store_mod.StoreError,
    training_mod.TrainingError,
    OSError,
    json.JSONDecodeError,
)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    commands = {
        "embed-fallback": _cmd_embed_fallback,
        "train": _cmd_train,
        "ablate": lambda a: _cmd_train(a, variant=a.variant),
        "evaluate": _cmd_evaluate,
        "predict": _cmd_predict,
        "metrics": _cmd_metrics,
        "info": _cmd_info,
    }
    try:
        return commands[args.command](args)
    except _HANDLED as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
