"""Command-line front-end.

One binary, eight subcommands: validate, stats, mslr, train, eval, ablate,
extract, export. Configuration precedence is defaults < --config file <
explicit flags; every output-writing run drops the fully resolved
configuration next to its outputs as run_config.json.

Exit codes: 0 ok, 1 validation/data error, 2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluation, extract as extract_mod
from .corpus import OntologySchema, dataset_stats, load_corpus, validate_ontology, validate_records
from .errors import DataError
from .mslr import build_vocab, dump_jsonl, encode_all, expand
from .train import TrainConfig, train_loop

_TRAIN_KEYS = {
    "seed", "split_seed", "shuffle_seed", "learning_rate", "epsilon",
    "weight_decay", "beta1", "beta2", "batch_size", "epochs",
    "grad_clip_norm", "checkpoint_every", "max_len", "min_freq",
    "train_ratio", "val_ratio", "test_ratio",
}
_MODEL_KEYS = {
    "embed_dim", "hidden_dim", "dropout", "use_entity_mask", "use_entity_type",
    "alpha", "beta", "bio_constrained_decode", "freeze_embeddings",
}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    unknown = set(payload) - _TRAIN_KEYS - _MODEL_KEYS
    if unknown:
        raise DataError(f"config file {path}: unknown keys {sorted(unknown)}")
    return payload


def _resolve(args, file_config: dict) -> tuple[TrainConfig, dict]:
    """defaults < config file < flags."""
    train_kwargs = {k: v for k, v in file_config.items() if k in _TRAIN_KEYS}
    model_kwargs = {k: v for k, v in file_config.items() if k in _MODEL_KEYS}
    flag_map = {
        "seed": "seed", "lr": "learning_rate", "epochs": "epochs",
        "batch_size": "batch_size", "max_len": "max_len",
        "weight_decay": "weight_decay", "min_freq": "min_freq",
        "grad_clip_norm": "grad_clip_norm",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            train_kwargs[key] = value
    for key in _MODEL_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            model_kwargs[key] = value
    return TrainConfig(**train_kwargs), model_kwargs


def _write_run_config(out_dir: Path, command: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, **payload}
    (out_dir / "run_config.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


def _ontology(args) -> OntologySchema:
    if getattr(args, "ontology", None):
        return OntologySchema.load(args.ontology)
    return OntologySchema.default()


def _log(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    ontology = _ontology(args)
    issues = validate_records(args.dataset, ontology)
    for issue in issues:
        print(str(issue))
    ontology_violations = 0
    if not issues:
        corpus = load_corpus(args.dataset, ontology)
        for i, sentence in enumerate(corpus.sentences):
            for violation in validate_ontology(sentence, ontology):
                ontology_violations += 1
                prefix = "error" if args.strict else "warning"
                print(f"{prefix}: record {i}: {violation}")
    print(
        f"structural errors: {len(issues)}; "
        f"ontology domain/range violations: {ontology_violations}"
    )
    if issues:
        return 1
    if args.strict and ontology_violations:
        return 1
    return 0


def cmd_stats(args) -> int:
    corpus = load_corpus(args.dataset, _ontology(args))
    stats = dataset_stats(corpus.sentences)
    print(stats.to_table())
    if args.out:
        out = Path(args.out)
        _write_run_config(out, "stats", {"dataset": str(args.dataset), "seed": args.seed})
        (out / "stats.json").write_text(
            json.dumps(stats.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out / "stats.txt").write_text(stats.to_table() + "\n", encoding="utf-8")
    return 0


def cmd_mslr(args) -> int:
    corpus = load_corpus(args.dataset, _ontology(args))
    vocab = build_vocab(corpus.sentences, min_freq=args.min_freq or 1)
    examples = []
    for i, sentence in enumerate(corpus.sentences):
        examples.extend(expand(sentence, corpus.types, sentence_index=i))
    instances, skipped = encode_all(examples, vocab, max_len=args.max_len or 256)
    for origin, length in skipped:
        _log(f"skipped overlong sentence {origin[0]} (length {length})")
    out = Path(args.out)
    _write_run_config(
        out, "mslr",
        {
            "dataset": str(args.dataset), "seed": args.seed,
            "max_len": args.max_len or 256, "min_freq": args.min_freq or 1,
        },
    )
    (out / "instances.jsonl").write_text(dump_jsonl(instances), encoding="utf-8")
    (out / "vocab.json").write_text(
        json.dumps(vocab.to_list(), indent=1) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(instances)} instances ({len(skipped)} skipped) to {out}")
    return 0


def cmd_train(args) -> int:
    train_config, model_kwargs = _resolve(args, _load_config_file(args.config))
    corpus = load_corpus(args.dataset, _ontology(args))
    out = Path(args.out)
    _write_run_config(
        out, "train",
        {
            "dataset": str(args.dataset),
            "seed": train_config.seed,
            "train_config": train_config.to_dict(),
            "model_kwargs": dict(sorted(model_kwargs.items())),
            "pretrained_embeddings": str(args.pretrained_embeddings or ""),
        },
    )
    pretrained = None
    if args.pretrained_embeddings:
        # the file is bound to the training vocabulary; rebuild it to check
        from .model import load_embedding_file
        from .mslr import build_vocab
        from .train import split as split_corpus

        train_sents, _val, _test = split_corpus(
            corpus.sentences,
            (train_config.train_ratio, train_config.val_ratio, train_config.test_ratio),
            seed=train_config.effective_split_seed,
        )
        vocab = build_vocab(train_sents, min_freq=train_config.min_freq)
        pretrained = load_embedding_file(
            args.pretrained_embeddings, expected_vocab_hash=vocab.content_hash()
        )
    result = train_loop(
        corpus.sentences, corpus.types, train_config,
        model_kwargs=model_kwargs, out_dir=out, log_fn=_log,
        pretrained_embed=pretrained,
    )
    (out / "training_log.csv").write_text(result.log.to_csv(), encoding="utf-8")
    (out / "training_log.json").write_text(result.log.to_json() + "\n", encoding="utf-8")
    (out / "vocab.json").write_text(
        json.dumps(result.vocab.to_list(), indent=1) + "\n", encoding="utf-8"
    )
    for origin, length in result.skipped_instances:
        _log(f"skipped overlong sentence {origin[0]} (length {length})")
    print(f"best epoch {result.best_epoch}; checkpoint {result.best_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    from .model import load_checkpoint
    from .mslr import Vocabulary
    from .corpus import TypeSystem
    from .train import split as split_corpus

    ckpt = load_checkpoint(args.checkpoint)
    vocab = Vocabulary(ckpt.extras["vocab"])
    types = TypeSystem.from_dict(ckpt.extras["types"])
    corpus = load_corpus(args.dataset, _ontology(args))
    stored = ckpt.extras.get("train_config")
    if args.split == "all" or stored is None:
        target = list(corpus.sentences)
    else:
        cfg = TrainConfig.from_dict(stored)
        train_s, val_s, test_s = split_corpus(
            corpus.sentences,
            (cfg.train_ratio, cfg.val_ratio, cfg.test_ratio),
            seed=cfg.effective_split_seed,
        )
        target = {"train": train_s, "val": val_s, "test": test_s}[args.split]
    reports = evaluation.evaluate_model(
        ckpt.params, ckpt.config, vocab, types, target,
        re_mode=args.re_mode,
        ontology=_ontology(args),
        ontology_filter=args.ontology_filter,
        confidence_floor=args.confidence_floor,
    )
    summary = {task: report.to_dict() for task, report in reports.items()}
    print(
        f"NER P {reports['ner'].precision:.4f} R {reports['ner'].recall:.4f} "
        f"F1 {reports['ner'].f1:.4f} | RE P {reports['re'].precision:.4f} "
        f"R {reports['re'].recall:.4f} F1 {reports['re'].f1:.4f}"
    )
    if args.out:
        out = Path(args.out)
        _write_run_config(
            out, "eval",
            {
                "dataset": str(args.dataset), "checkpoint": str(args.checkpoint),
                "seed": args.seed, "split": args.split, "re_mode": args.re_mode,
                "ontology_filter": args.ontology_filter,
                "confidence_floor": args.confidence_floor,
            },
        )
        (out / "metrics.json").write_text(
            json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out / "metrics.txt").write_text(
            evaluation.metrics_table(reports) + "\n", encoding="utf-8"
        )
    return 0


def cmd_ablate(args) -> int:
    train_config, model_kwargs = _resolve(args, _load_config_file(args.config))
    corpus = load_corpus(args.dataset, _ontology(args))
    out = Path(args.out)
    _write_run_config(
        out, "ablate",
        {
            "dataset": str(args.dataset), "seed": train_config.seed,
            "train_config": train_config.to_dict(),
            "model_kwargs": dict(sorted(model_kwargs.items())),
        },
    )
    result = evaluation.run_ablation(
        corpus.sentences, corpus.types, train_config, model_kwargs=model_kwargs
    )
    flags = {name: (m, t) for name, m, t in evaluation.ABLATION_CONFIGS}
    for name, tasks in result.reports.items():
        mask, typ = flags[name]
        payload = {task: report.to_dict() for task, report in tasks.items()}
        path = out / f"ablation_mask-{str(mask).lower()}_type-{str(typ).lower()}.json"
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / "ablation.txt").write_text(result.to_table() + "\n", encoding="utf-8")
    print(result.to_table())
    return 0


def cmd_extract(args) -> int:
    extractor = extract_mod.Extractor.from_checkpoint(args.checkpoint, _ontology(args))
    results: list[extract_mod.ExtractionResult] = []
    if args.input:
        lines = [
            line.strip()
            for line in Path(args.input).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

        def run_line(pair):
            index, line = pair
            return extractor.extract_text(
                line, sentence_index=index,
                ontology_filter=args.ontology_filter,
                confidence_floor=args.confidence_floor,
            )

        if args.workers and args.workers > 1:
            with ThreadPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(run_line, enumerate(lines)))
        else:
            results = [run_line(item) for item in enumerate(lines)]
    else:
        corpus = load_corpus(args.dataset, _ontology(args))
        for i, sentence in enumerate(corpus.sentences):
            spans = None
            if args.gold_spans:
                spans = [
                    evaluation.SpanPrediction(i, e.start, e.end, e.entity_type.name)
                    for e in sentence.entities
                ]
            results.append(
                extractor.extract_tokens(
                    sentence.tokens, sentence_index=i,
                    ontology_filter=args.ontology_filter,
                    confidence_floor=args.confidence_floor,
                    spans=spans,
                )
            )
    total = sum(len(r.triples) for r in results)
    print(f"extracted {total} triples from {len(results)} sentences")
    if args.out:
        out = Path(args.out)
        _write_run_config(
            out, "extract",
            {
                "checkpoint": str(args.checkpoint), "seed": args.seed,
                "input": str(args.input or args.dataset),
                "gold_spans": bool(args.gold_spans),
                "ontology_filter": args.ontology_filter,
                "confidence_floor": args.confidence_floor,
            },
        )
        (out / "extractions.json").write_text(
            json.dumps([r.to_dict() for r in results], indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_export(args) -> int:
    payload = json.loads(Path(args.extractions).read_text(encoding="utf-8"))
    results = []
    for item in payload:
        triples = [
            extract_mod.Triple(
                head=t["head"], head_type=t["head_type"], relation=t["relation"],
                tail=t["tail"], tail_type=t["tail_type"],
                confidence=t["confidence"], sentence_index=t["sentence_index"],
                head_span=tuple(t["head_span"]), tail_span=tuple(t["tail_span"]),
            )
            for t in item["triples"]
        ]
        results.append(
            extract_mod.ExtractionResult(
                sentence_index=item["sentence_index"],
                tokens=tuple(item["tokens"]),
                spans=[], triples=triples,
            )
        )
    blob = extract_mod.export_graph(results, args.format)
    out = Path(args.out)
    _write_run_config(
        out, "export",
        {"extractions": str(args.extractions), "format": args.format, "seed": args.seed},
    )
    name = "graph.json" if args.format == "json" else "edges.csv"
    (out / name).write_bytes(blob)
    print(f"wrote {out / name}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctie",
        description="Joint entity and relation extraction for threat intelligence text.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True, out_required=False):
        if dataset:
            p.add_argument("--dataset", required=True, help="corpus JSON file")
        p.add_argument("--ontology", help="ontology JSON (default: bundled schema)")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--workers", type=int, default=1)
        if out_required:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("validate", help="structural + ontology validation")
    common(p)
    p.add_argument("--strict", action="store_true",
                   help="treat domain/range violations as errors")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="entity/relation distribution report")
    common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("mslr", help="dump the multisequence labeling instances")
    common(p, out_required=True)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--min-freq", type=int, default=None)
    p.set_defaults(func=cmd_mslr)

    def train_flags(p):
        p.add_argument("--config", help="JSON config file (defaults < file < flags)")
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--weight-decay", type=float, default=None)
        p.add_argument("--max-len", type=int, default=None)
        p.add_argument("--min-freq", type=int, default=None)
        p.add_argument("--grad-clip-norm", type=float, default=None)
        p.add_argument("--embed-dim", type=int, default=None, dest="embed_dim")
        p.add_argument("--hidden-dim", type=int, default=None, dest="hidden_dim")
        p.add_argument("--dropout", type=float, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--use-entity-mask", action=argparse.BooleanOptionalAction,
                       default=None, dest="use_entity_mask")
        p.add_argument("--use-entity-type", action=argparse.BooleanOptionalAction,
                       default=None, dest="use_entity_type")
        p.add_argument("--bio-constrained-decode", action=argparse.BooleanOptionalAction,
                       default=None, dest="bio_constrained_decode")
        p.add_argument("--pretrained-embeddings", default=None,
                       dest="pretrained_embeddings",
                       help="embedding container built for the training vocabulary")
        p.add_argument("--freeze-embeddings", action=argparse.BooleanOptionalAction,
                       default=None, dest="freeze_embeddings")

    p = sub.add_parser("train", help="train the joint model")
    common(p, out_required=True)
    train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--re-mode", choices=("gold", "pipeline"), default="gold",
                   dest="re_mode")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--ontology-filter", action="store_true", dest="ontology_filter")
    p.add_argument("--confidence-floor", type=float, default=0.0,
                   dest="confidence_floor")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="four-configuration expert-feature ablation")
    common(p, out_required=True)
    train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("extract", help="end-to-end triple extraction")
    common(p, dataset=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="plain text file, one sentence per line")
    p.add_argument("--dataset", help="corpus JSON (use --gold-spans for gold entities)")
    p.add_argument("--gold-spans", action="store_true", dest="gold_spans")
    p.add_argument("--ontology-filter", action="store_true", dest="ontology_filter")
    p.add_argument("--confidence-floor", type=float, default=0.0,
                   dest="confidence_floor")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("export", help="export extractions as a graph file")
    common(p, dataset=False)
    p.add_argument("--extractions", required=True, help="extractions.json from extract")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "extract" and not (args.input or args.dataset):
        parser.error("extract needs --input or --dataset")
    try:
        return args.func(args)
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
