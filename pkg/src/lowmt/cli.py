"""Command-line entry points.

Verbs: gen-toy, prepare, train, synthesize, evaluate, run, compare, serve.
Failures exit with distinct codes: 2 for configuration errors, 3 for data
errors, 4 for numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import torch

from .checkpoint import load_checkpoint
from .corpus import (
    CleaningConfig,
    CorpusManifest,
    PairEntry,
    SplitSpec,
    clean,
    dedup,
    load_parallel,
    reverse,
    save_parallel,
    split_holdout,
)
from .decoding import factor_index, greedy_translate_batch
from .errors import ConfigError, DataError, NumericError
from .experiments import (
    ExperimentSpec,
    ModelParams,
    compare as compare_reports,
    run as run_experiment,
)
from .metrics import ScoreReport, bleu, chrf
from .model import build_model
from .subword import SubwordModel, train_bpe
from .synthesis import generate, plan_shares, save_synthetic
from .toy import ToyLanguageSpec, generate_toy_suite, scaled_spec
from .trainer import TrainConfig, train as train_model

EXIT_CODES = {ConfigError: 2, DataError: 3, NumericError: 4}


def _toy_spec(scale: float) -> ToyLanguageSpec:
    return ToyLanguageSpec() if scale == 1.0 else scaled_spec(scale)


def cmd_gen_toy(args) -> int:
    out_dir = Path(args.out_dir)
    manifest, _ = generate_toy_suite(_toy_spec(args.scale), seed=args.seed,
                                     out_dir=out_dir)
    print(f"wrote {len(manifest.pairs)} pairs and {len(manifest.mono)} "
          f"monolingual files under {out_dir}")
    print(f"languages: {', '.join(manifest.languages)}")
    if args.emit_spec:
        spec = ExperimentSpec(name=out_dir.name or "toy",
                              manifest_path=str(out_dir / "manifest.json"),
                              seed=args.seed)
        spec.save(args.emit_spec)
        print(f"experiment spec: {args.emit_spec}")
    return 0


def cmd_prepare(args) -> int:
    direction = (args.src_lang, args.tgt_lang)
    corpus = load_parallel(args.src, args.tgt, direction)
    cleaned, clean_counts = clean(corpus, CleaningConfig(
        max_len_words=args.max_len_words, len_ratio_max=args.len_ratio_max))
    unique, dedup_counts = dedup(cleaned)
    split = split_holdout([unique], SplitSpec(
        test_total=args.test, valid_total=args.valid, seed=args.seed))[0]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    key = f"{direction[0]}-{direction[1]}"
    files = {}
    for name, part in (("train", split.train), ("valid", split.valid),
                       ("test", split.test)):
        src_path = f"{key}.{name}.{direction[0]}"
        tgt_path = f"{key}.{name}.{direction[1]}"
        save_parallel(part, out_dir / src_path, out_dir / tgt_path)
        files[name] = (src_path, tgt_path)
    manifest = CorpusManifest(
        languages=sorted(direction),
        pairs=[PairEntry(src=direction[0], tgt=direction[1], role=args.role,
                         train=files["train"], valid=files["valid"],
                         test=files["test"])],
        base_dir=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    print(f"loaded {clean_counts.before}  cleaned -{clean_counts.removed}  "
          f"deduplicated -{dedup_counts.eliminated}")
    print(f"train {len(split.train)}  valid {len(split.valid)}  test {len(split.test)}")
    print(f"manifest: {out_dir / 'manifest.json'}")
    return 0


def _parse_direction(text: str) -> tuple[str, str]:
    parts = text.split("-")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"direction must look like 'src-tgt', got {text!r}")
    return parts[0], parts[1]


def cmd_train(args) -> int:
    manifest = CorpusManifest.load(args.manifest)
    src, tgt = _parse_direction(args.direction)
    try:
        entry = manifest.pair(src, tgt)
    except ConfigError:
        entry = manifest.pair(tgt, src)
    train_corpus = manifest.load_split(entry, "train")
    valid_corpus = manifest.load_split(entry, "valid")
    if (src, tgt) != train_corpus.direction:
        train_corpus, valid_corpus = reverse(train_corpus), reverse(valid_corpus)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    texts = [p.src for p in train_corpus.pairs] + [p.tgt for p in train_corpus.pairs]
    subword = train_bpe(texts, vocab_size=args.bpe_vocab)
    subword.save(out_dir / "bpe.model")
    params = ModelParams(enc_layers=args.layers, dec_layers=args.layers,
                         heads=args.heads, d_model=args.d_model,
                         d_ff=4 * args.d_model, max_len=args.max_len)
    cfg = params.resolve(subword.vocab_size, len(manifest.languages), factored=False)
    model = build_model(cfg, seed=args.seed)
    train_cfg = dataclasses.replace(TrainConfig(), seed=args.seed,
                                    max_updates=args.max_updates)
    result = train_model(model, subword, manifest.languages, train_corpus.pairs,
                         valid_corpus.pairs, train_cfg, ckpt_dir=out_dir)
    print(f"best step {result.best.step}  valid ppl {result.best.valid_ppl:.4f}  "
          f"stopped: {result.stopped}")
    print(f"checkpoints under {out_dir}")
    return 0


def cmd_synthesize(args) -> int:
    manifest = CorpusManifest.load(args.manifest)
    checkpoint = load_checkpoint(args.checkpoint)
    subword = SubwordModel.load(args.subword)
    entries = manifest.mono_for(args.lang, args.set)
    if not entries:
        raise DataError(f"manifest has no monolingual set {args.set} for {args.lang!r}")
    mono = manifest.load_mono(entries[0])
    plan = plan_shares(mono, manifest.languages, args.mode, seed=args.seed)
    corpus = generate(checkpoint, subword, manifest.languages, mono, plan,
                      include_forward=not args.no_forward)
    save_synthetic(corpus, args.out_dir)
    print(f"translated {len(mono)} lines of {args.lang} "
          f"({corpus.dropped} dropped, {corpus.failed} failed)")
    print(f"wrote {len(corpus.pairs)} synthetic pairs under {args.out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    manifest = CorpusManifest.load(args.manifest)
    checkpoint = load_checkpoint(args.checkpoint)
    subword = SubwordModel.load(args.subword)
    model = checkpoint.restore_model()
    tests = {}
    for entry in manifest.pairs:
        if entry.test is None:
            continue
        corpus = manifest.load_split(entry, "test")
        tests[corpus.key] = corpus
        tests[reverse(corpus).key] = reverse(corpus)
    wanted = args.directions.split(",") if args.directions else sorted(tests)
    report = ScoreReport(label=args.label)
    for key in wanted:
        if key not in tests:
            raise ConfigError(f"no test data for direction {key!r}")
        corpus = tests[key]
        factor = factor_index(manifest.languages, corpus.direction[1])
        hyps = []
        sources = [p.src for p in corpus.pairs]
        for start in range(0, len(sources), 64):
            chunk = sources[start:start + 64]
            hyps.extend(r.text for r in greedy_translate_batch(
                model, subword, chunk, factor, max_len=model.cfg.max_len))
        refs = [p.tgt for p in corpus.pairs]
        report.bleu[key] = bleu(hyps, refs).score
        report.chrf[key] = chrf(hyps, refs).score
    for key in wanted:
        print(f"{key}\tBLEU {report.bleu[key]:.1f}\tchrF {report.chrf[key]:.3f}")
    if args.out:
        Path(args.out).write_text(json.dumps(
            {"label": report.label, "bleu": report.bleu, "chrf": report.chrf},
            indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"scores: {args.out}")
    return 0


def cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    run_experiment(spec, args.out_dir, resume=args.resume)
    out_dir = Path(args.out_dir)
    print()
    print((out_dir / "report.bleu.tsv").read_text(encoding="utf-8"))
    print(f"reports under {out_dir}")
    return 0


def _load_report_rows(path: str) -> dict[str, ScoreReport]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise DataError(f"no report at {path}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"{path} is not valid JSON: {err}") from err
    rows = {}
    for row in payload.get("rows", []):
        rows[row["label"]] = ScoreReport(
            label=row["label"], bleu=row.get("bleu", {}), chrf=row.get("chrf", {}),
            bleu_low=row.get("bleu_low"), chrf_low=row.get("chrf_low"))
    if not rows:
        raise DataError(f"{path} contains no report rows")
    return rows


def cmd_compare(args) -> int:
    left_rows = _load_report_rows(args.report)
    right_rows = _load_report_rows(args.other) if args.other else left_rows
    for label, rows in ((args.left, left_rows), (args.right, right_rows)):
        if label not in rows:
            raise ConfigError(
                f"no row {label!r}; available: {', '.join(sorted(rows))}")
    result = compare_reports(left_rows[args.left], right_rows[args.right],
                             metric=args.metric)
    print(f"{result.left} vs {result.right} ({result.metric})")
    print(result.table(), end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .serve import ServeConfig, load_service_app

    config = ServeConfig(max_chars=args.max_chars,
                         max_concurrent=args.max_concurrent,
                         max_inflight=args.max_inflight,
                         request_log=args.request_log)
    app = load_service_app(args.checkpoint, args.subword,
                           args.languages.split(","), config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowmt",
        description="Desk-scale multilingual translation workbench.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-toy", help="generate the constructed-language corpus suite")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0,
                   help="shrink factor for every corpus size (1.0 = full preset)")
    p.add_argument("--emit-spec", default=None,
                   help="also write a default experiment spec to this path")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("prepare", help="clean, deduplicate, and split one raw parallel pair")
    p.add_argument("--src", required=True, help="source-side text file")
    p.add_argument("--tgt", required=True, help="target-side text file")
    p.add_argument("--src-lang", required=True)
    p.add_argument("--tgt-lang", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--valid", type=int, default=500)
    p.add_argument("--test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--role", default="low_resource",
                   choices=["high_resource", "low_resource"])
    p.add_argument("--max-len-words", type=int, default=200)
    p.add_argument("--len-ratio-max", type=float, default=9.0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one bilingual model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--direction", required=True, help="e.g. ta-ti")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bpe-vocab", type=int, default=1200)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--max-updates", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize",
                       help="back-/forward-translate one monolingual set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subword", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--set", type=int, default=1)
    p.add_argument("--mode", default="equal_shares",
                   choices=["equal_shares", "uniform_random"])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-forward", action="store_true",
                   help="emit only back-translation pairs")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="score a checkpoint on held-out test sets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subword", required=True)
    p.add_argument("--directions", default=None,
                   help="comma-separated; default = every direction with test data")
    p.add_argument("--label", default="model")
    p.add_argument("--out", default=None, help="also write scores as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="run an experiment spec end to end")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="delta table between two report rows")
    p.add_argument("report", help="report.json written by `run`")
    p.add_argument("left", help="row label")
    p.add_argument("right", help="row label")
    p.add_argument("--other", default=None,
                   help="take the right row from this report instead")
    p.add_argument("--metric", default="bleu", choices=["bleu", "chrf"])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subword", required=True)
    p.add_argument("--languages", required=True, help="comma-separated codes")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8100)
    p.add_argument("--max-chars", type=int, default=2000)
    p.add_argument("--max-concurrent", type=int, default=2)
    p.add_argument("--max-inflight", type=int, default=64)
    p.add_argument("--request-log", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    torch.set_num_threads(1)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, NumericError) as err:
        print(f"error: {err}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(err, cls):
                return code
        return 1  # unreachable: the except clause covers exactly these classes


if __name__ == "__main__":
    sys.exit(main())
