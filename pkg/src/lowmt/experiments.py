"""Experiment grid orchestration: bilingual baselines, a factored
multilingual model, iterative synthetic-data rounds, fine-tuning and
transfer stages, shared-test-set scoring, and per-stage resume.

Every stage directory carries a `stage.json` provenance record (stage kind,
spec/manifest hashes, parent and initial-weights fingerprints, scores).  A
completed stage is reused verbatim when the same spec runs again over the
same output directory; reports are rebuilt from the records, so a finished
run re-emits byte-identical report files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import torch

from .checkpoint import Checkpoint, fingerprint_checkpoint, load_checkpoint, save_checkpoint
from .corpus import CorpusManifest, ParallelCorpus, SentencePair, build_multilingual, reverse
from .decoding import factor_index, greedy_translate_batch
from .errors import ConfigError, DataError
from .metrics import (
    BleuConfig,
    ChrfConfig,
    ScoreInputError,
    ScoreReport,
    aggregate,
    bleu,
    chrf,
    low_resource_directions,
    report_table,
    round_half_up,
)
from .model import ModelConfig, build_model, init_from
from .subword import SubwordModel, train_bpe
from .synthesis import (
    EQUAL_SHARES,
    SyntheticCorpus,
    generate,
    iterate,
    load_synthetic,
    merge,
    plan_shares,
    save_synthetic,
)
from .toy import detect_language
from .trainer import TrainConfig, fine_tune, train

EVAL_BATCH = 64

STAGE_KINDS = (
    "bilingual_baselines",
    "multilingual_baseline",
    "bt_iteration",
    "fine_tune",
    "transfer",
)


@dataclass
class StageSpec:
    kind: str
    label: str
    iteration: int = 0          # bt_iteration: 1 or 2
    generator: str = ""         # bt_iteration: stage whose best model translates
    init_from: str | None = None  # stage to take initial weights from; None = fresh
    direction: str = ""         # fine_tune: directed pair "src-tgt"
    parent_pair: str = ""       # transfer: directed parent pair
    child_pair: str = ""        # transfer: directed child pair
    share_mode: str = EQUAL_SHARES
    include_forward: bool = True

    def slug(self) -> str:
        s = re.sub(r"[^a-z0-9]+", "-", self.label.lower()).strip("-")
        if not s:
            raise ConfigError(f"stage label {self.label!r} has no usable characters")
        return s


@dataclass
class ModelParams:
    """Model shape without the vocabulary sizes, which are resolved when the
    subword model and language set are known."""

    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    d_model: int = 128
    d_ff: int = 256
    factor_dim: int = 8
    dropout: float = 0.1
    label_smoothing: float = 0.1
    max_len: int = 64

    def resolve(self, token_vocab: int, n_languages: int, factored: bool) -> ModelConfig:
        return ModelConfig(
            token_vocab=token_vocab,
            factor_vocab=max(2, n_languages),
            enc_layers=self.enc_layers,
            dec_layers=self.dec_layers,
            heads=self.heads,
            d_model=self.d_model,
            d_ff=self.d_ff,
            factor_dim=self.factor_dim if factored else 0,
            dropout=self.dropout,
            label_smoothing=self.label_smoothing,
            max_len=self.max_len,
        )


def default_stages(fine_tune_direction: str = "ta-ti",
                   transfer_parent: str = "ta-te",
                   transfer_child: str = "ta-ti") -> list[StageSpec]:
    return [
        StageSpec(kind="bilingual_baselines", label="Baselines"),
        StageSpec(kind="multilingual_baseline", label="ML"),
        StageSpec(kind="bt_iteration", label="+BT1(*)", iteration=1, generator="ML"),
        StageSpec(kind="bt_iteration", label="+BT2(**)", iteration=2,
                  generator="+BT1(*)", init_from="+BT1(*)"),
        StageSpec(kind="fine_tune", label=f"FT {fine_tune_direction}",
                  init_from="ML", direction=fine_tune_direction),
        StageSpec(kind="transfer", label=f"Transfer {transfer_parent}>{transfer_child}",
                  parent_pair=transfer_parent, child_pair=transfer_child),
    ]


@dataclass
class ExperimentSpec:
    name: str
    manifest_path: str
    model: ModelParams = field(default_factory=ModelParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    stages: list[StageSpec] = field(default_factory=default_stages)
    bpe_vocab: int = 1200
    seed: int = 0

    def validate(self) -> None:
        labels: list[str] = []
        bt_iterations: list[int] = []
        for stage in self.stages:
            if stage.kind not in STAGE_KINDS:
                raise ConfigError(f"unknown stage kind {stage.kind!r}")
            if stage.label in labels:
                raise ConfigError(f"duplicate stage label {stage.label!r}")
            if stage.kind == "bt_iteration":
                if stage.iteration not in (1, 2):
                    raise ConfigError("bt_iteration must be iteration 1 or 2")
                if stage.iteration == 2 and 1 not in bt_iterations:
                    raise ConfigError("bt_iteration 2 requires an earlier iteration 1")
                if not stage.generator or stage.generator not in labels:
                    raise ConfigError(
                        f"stage {stage.label!r} needs an earlier generator stage"
                    )
                bt_iterations.append(stage.iteration)
            if stage.kind == "fine_tune":
                if not stage.init_from or stage.init_from not in labels:
                    raise ConfigError(f"stage {stage.label!r} needs an earlier parent stage")
                if "-" not in stage.direction:
                    raise ConfigError("fine_tune needs a direction like 'xx-yy'")
            if stage.kind == "transfer":
                if "-" not in stage.parent_pair or "-" not in stage.child_pair:
                    raise ConfigError("transfer needs parent and child directed pairs")
                if not any(s.kind == "bilingual_baselines" for s in self.stages[:len(labels)]):
                    raise ConfigError("transfer requires an earlier bilingual_baselines stage")
            if stage.init_from is not None and stage.init_from not in labels:
                raise ConfigError(
                    f"stage {stage.label!r} initializes from unknown stage {stage.init_from!r}"
                )
            labels.append(stage.label)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["model"] = dataclasses.asdict(self.model)
        out["train"] = dataclasses.asdict(self.train)
        out["stages"] = [dataclasses.asdict(s) for s in self.stages]
        return out

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        try:
            spec = cls(
                name=data["name"],
                manifest_path=data["manifest_path"],
                model=ModelParams(**data.get("model", {})),
                train=TrainConfig(**data.get("train", {})),
                stages=[StageSpec(**s) for s in data.get("stages", [])],
                bpe_vocab=data.get("bpe_vocab", 1200),
                seed=data.get("seed", 0),
            )
        except TypeError as err:
            raise ConfigError(f"bad experiment spec: {err}") from err
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: Path | str) -> "ExperimentSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as err:
            raise DataError(f"no experiment spec at {path}") from err
        except json.JSONDecodeError as err:
            raise DataError(f"{path} is not valid JSON: {err}") from err
        return cls.from_dict(data)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def stage_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class ExperimentReport:
    name: str
    rows: list[ScoreReport]
    zero_shot: dict[str, dict[str, float]] = field(default_factory=dict)
    out_dir: Path = field(default_factory=Path)

    def row(self, label: str) -> ScoreReport:
        for r in self.rows:
            if r.label == label:
                return r
        raise ConfigError(f"report has no row {label!r}")


class ExperimentRun:
    """One spec bound to a manifest and an output directory."""

    def __init__(self, spec: ExperimentSpec, out_dir: Path | str,
                 log: Callable[[str], None] = print):
        spec.validate()
        self.spec = spec
        self.out_dir = Path(out_dir)
        self.log = log
        manifest_path = Path(spec.manifest_path)
        if not manifest_path.exists():
            raise DataError(f"no corpus manifest at {manifest_path}")
        self.manifest = CorpusManifest.load(manifest_path)
        self.manifest_hash = hashlib.sha256(manifest_path.read_bytes()).hexdigest()
        self.languages = list(self.manifest.languages)
        self.spec_hash = spec.hash()
        lexicons_path = manifest_path.parent / "lexicons.json"
        self.lexicons: dict[str, list[str]] | None = None
        if lexicons_path.exists():
            self.lexicons = json.loads(lexicons_path.read_text(encoding="utf-8"))

        self.data_pairs = [p for p in self.manifest.pairs if p.train is not None]
        self.zero_pairs = [p for p in self.manifest.pairs if p.train is None]
        high = [p for p in self.data_pairs if p.role == "high_resource"]
        if len(high) != 1:
            raise ConfigError("manifest must declare exactly one high_resource pair")
        self.high_pair = (high[0].src, high[0].tgt)
        self.agg_pairs = [(p.src, p.tgt) for p in self.data_pairs]
        self.table_pairs = self.agg_pairs + [(p.src, p.tgt) for p in self.zero_pairs]

        self._train_by_direction: dict[str, ParallelCorpus] = {}
        self._valid_by_direction: dict[str, ParallelCorpus] = {}
        self._test_by_direction: dict[str, ParallelCorpus] = {}
        for entry in self.manifest.pairs:
            for split, store in (("train", self._train_by_direction),
                                 ("valid", self._valid_by_direction),
                                 ("test", self._test_by_direction)):
                if getattr(entry, split) is None:
                    continue
                corpus = self.manifest.load_split(entry, split)
                store[corpus.key] = corpus
                store[reverse(corpus).key] = reverse(corpus)

        union = build_multilingual([self.manifest.load_split(p, "train")
                                    for p in self.data_pairs])
        self.train_union = [pair for corpus in union for pair in corpus.pairs]
        valid_union = build_multilingual([self.manifest.load_split(p, "valid")
                                          for p in self.data_pairs])
        self.valid_union = [pair for corpus in valid_union for pair in corpus.pairs]
        self.eval_directions = sorted(self._test_by_direction)

        self.subword: SubwordModel | None = None
        self._results: dict[str, dict] = {}

    # -- shared assets --------------------------------------------------------

    def _bpe_path(self) -> Path:
        return self.out_dir / "bpe.model"

    def ensure_subword(self, resume: bool = True) -> SubwordModel:
        if self.subword is not None:
            return self.subword
        path = self._bpe_path()
        if resume and path.exists():
            self.subword = SubwordModel.load(path)
            return self.subword
        texts: list[str] = []
        for corpus in [self.manifest.load_split(p, "train") for p in self.data_pairs]:
            texts.extend(p.src for p in corpus.pairs)
            texts.extend(p.tgt for p in corpus.pairs)
        for entry in self.manifest.mono:
            texts.extend(self.manifest.load_mono(entry).lines)
        self.log(f"training subword model ({self.spec.bpe_vocab} target) "
                 f"on {len(texts)} lines")
        self.subword = train_bpe(texts, vocab_size=self.spec.bpe_vocab)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.subword.save(path)
        return self.subword

    def _model_config(self, factored: bool) -> ModelConfig:
        sub = self.ensure_subword()
        return self.spec.model.resolve(sub.vocab_size, len(self.languages), factored)

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, ckpt: Checkpoint, label: str,
                 directions: Sequence[str] | None = None) -> ScoreReport:
        sub = self.ensure_subword()
        model = ckpt.restore_model()
        report = ScoreReport(label=label)
        report.bleu_signature = BleuConfig().signature("mul-mul", self.spec.name)
        report.chrf_signature = ChrfConfig().signature("mul-mul", self.spec.name)
        for direction in (directions or self.eval_directions):
            corpus = self._test_by_direction[direction]
            tgt_lang = corpus.direction[1]
            factor = factor_index(self.languages, tgt_lang)
            hyps: list[str] = []
            sources = [p.src for p in corpus.pairs]
            for start in range(0, len(sources), EVAL_BATCH):
                chunk = sources[start:start + EVAL_BATCH]
                hyps.extend(r.text for r in greedy_translate_batch(
                    model, sub, chunk, factor, max_len=model.cfg.max_len))
            refs = [p.tgt for p in corpus.pairs]
            report.bleu[direction] = bleu(hyps, refs).score
            report.chrf[direction] = chrf(hyps, refs).score
        return report

    def zero_shot_accuracy(self, ckpt: Checkpoint) -> dict[str, float]:
        """Fraction of zero-resource-direction outputs whose detected language
        is the requested target (needs the suite's lexicons)."""
        if self.lexicons is None or not self.zero_pairs:
            return {}
        sub = self.ensure_subword()
        model = ckpt.restore_model()
        out: dict[str, float] = {}
        for entry in self.zero_pairs:
            for direction in (f"{entry.src}-{entry.tgt}", f"{entry.tgt}-{entry.src}"):
                corpus = self._test_by_direction[direction]
                tgt_lang = corpus.direction[1]
                factor = factor_index(self.languages, tgt_lang)
                sources = [p.src for p in corpus.pairs]
                hits = 0
                for start in range(0, len(sources), EVAL_BATCH):
                    chunk = sources[start:start + EVAL_BATCH]
                    for res in greedy_translate_batch(model, sub, chunk, factor,
                                                      max_len=model.cfg.max_len):
                        lang, _ = detect_language(res.text, self.lexicons)
                        hits += int(lang == tgt_lang)
                out[direction] = hits / len(sources)
        return out

    # -- stage plumbing ---------------------------------------------------------

    def _stage_dir(self, stage: StageSpec) -> Path:
        return self.out_dir / "stages" / stage.slug()

    def _record_path(self, stage: StageSpec) -> Path:
        return self._stage_dir(stage) / "stage.json"

    def _load_record(self, stage: StageSpec) -> dict | None:
        path = self._record_path(stage)
        if not path.exists():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        if record.get("spec_hash") != self.spec_hash or \
                record.get("manifest_hash") != self.manifest_hash:
            raise ConfigError(
                f"stage {stage.label!r} in {self._stage_dir(stage)} was produced by a "
                "different spec or manifest; use a fresh --out-dir"
            )
        return record

    def _write_record(self, stage: StageSpec, record: dict) -> None:
        record["spec_hash"] = self.spec_hash
        record["manifest_hash"] = self.manifest_hash
        path = self._record_path(stage)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")

    def _row_from_record(self, record: dict) -> ScoreReport:
        return ScoreReport(
            label=record["label"],
            bleu=dict(record["bleu"]),
            chrf=dict(record["chrf"]),
            bleu_low=record.get("bleu_low"),
            chrf_low=record.get("chrf_low"),
            bleu_signature=record.get("bleu_signature", ""),
            chrf_signature=record.get("chrf_signature", ""),
        )

    def _aggregate_full_row(self, report: ScoreReport) -> ScoreReport:
        needed = low_resource_directions(self.agg_pairs, self.high_pair)
        if needed and all(key in report.bleu for key in needed):
            return aggregate(report, self.agg_pairs, self.high_pair)
        return report  # partial rows (single-direction stages) keep None

    def _train_stage_model(
        self,
        stage: StageSpec,
        factored: bool,
        train_pairs: Sequence[SentencePair],
        valid_pairs: Sequence[SentencePair],
        init_state: dict | None,
        ckpt_dir: Path,
        seed_parts: tuple,
        constant_lr: float | None = None,
    ) -> tuple[Checkpoint, str]:
        sub = self.ensure_subword()
        cfg = self._model_config(factored)
        seed = stage_seed(self.spec.seed, *seed_parts)
        model = build_model(cfg, seed=seed)
        if init_state is not None:
            init_from(model, init_state)
        init_ckpt = Checkpoint(config=cfg, model_state={
            k: v.detach().clone() for k, v in model.state_dict().items()
        }, step=0, valid_ppl=0.0)
        init_fp = fingerprint_checkpoint(init_ckpt)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(init_ckpt, ckpt_dir / "init.ckpt")
        cfg_train = dataclasses.replace(self.spec.train, seed=seed)
        result = train(model, sub, self.languages, train_pairs, valid_pairs,
                       cfg_train, ckpt_dir=ckpt_dir, constant_lr=constant_lr)
        return result.best, init_fp

    # -- stage implementations ---------------------------------------------------

    def _run_bilingual_baselines(self, stage: StageSpec) -> dict:
        report = ScoreReport(label=stage.label)
        report.bleu_signature = BleuConfig().signature("mul-mul", self.spec.name)
        report.chrf_signature = ChrfConfig().signature("mul-mul", self.spec.name)
        checkpoints: dict[str, str] = {}
        init_fps: dict[str, str] = {}
        for entry in self.data_pairs:
            for direction in (f"{entry.src}-{entry.tgt}", f"{entry.tgt}-{entry.src}"):
                self.log(f"[{stage.label}] training bilingual {direction}")
                ckpt_dir = self._stage_dir(stage) / direction
                best, init_fp = self._train_stage_model(
                    stage, factored=False,
                    train_pairs=self._train_by_direction[direction].pairs,
                    valid_pairs=self._valid_by_direction[direction].pairs,
                    init_state=None,
                    ckpt_dir=ckpt_dir,
                    seed_parts=(stage.label, direction),
                )
                partial = self.evaluate(best, stage.label, directions=[direction])
                report.bleu.update(partial.bleu)
                report.chrf.update(partial.chrf)
                checkpoints[direction] = str(ckpt_dir / "best.ckpt")
                init_fps[direction] = init_fp
        report = self._aggregate_full_row(report)
        return {
            "kind": stage.kind, "label": stage.label,
            "bleu": report.bleu, "chrf": report.chrf,
            "bleu_low": report.bleu_low, "chrf_low": report.chrf_low,
            "bleu_signature": report.bleu_signature,
            "chrf_signature": report.chrf_signature,
            "checkpoints": checkpoints,
            "init_fingerprints": init_fps,
            "parent_fingerprint": None,
        }

    def _single_model_record(self, stage: StageSpec, best: Checkpoint, init_fp: str,
                             parent_fp: str | None, ckpt_dir: Path,
                             extra: dict | None = None) -> dict:
        report = self._aggregate_full_row(self.evaluate(best, stage.label))
        record = {
            "kind": stage.kind, "label": stage.label,
            "bleu": report.bleu, "chrf": report.chrf,
            "bleu_low": report.bleu_low, "chrf_low": report.chrf_low,
            "bleu_signature": report.bleu_signature,
            "chrf_signature": report.chrf_signature,
            "checkpoints": {"model": str(ckpt_dir / "best.ckpt")},
            "init_fingerprints": {"model": init_fp},
            "parent_fingerprint": parent_fp,
            "best_fingerprint": fingerprint_checkpoint(best),
            "zero_shot": self.zero_shot_accuracy(best),
        }
        if extra:
            record.update(extra)
        return record

    def _init_state_from(self, label: str) -> tuple[dict, str]:
        record = self._results.get(label)
        if record is None:
            raise ConfigError(f"stage {label!r} has not run")
        path = record["checkpoints"].get("model")
        if path is None:
            raise ConfigError(f"stage {label!r} has no single model checkpoint")
        ckpt = load_checkpoint(path)
        return ckpt.model_state, fingerprint_checkpoint(ckpt)

    def _run_multilingual(self, stage: StageSpec) -> dict:
        self.log(f"[{stage.label}] training multilingual model "
                 f"on {len(self.train_union)} pairs")
        ckpt_dir = self._stage_dir(stage)
        init_state, parent_fp = (None, None)
        if stage.init_from:
            init_state, parent_fp = self._init_state_from(stage.init_from)
        best, init_fp = self._train_stage_model(
            stage, factored=True,
            train_pairs=self.train_union,
            valid_pairs=self.valid_union,
            init_state=init_state,
            ckpt_dir=ckpt_dir,
            seed_parts=(stage.label,),
        )
        return self._single_model_record(stage, best, init_fp, parent_fp, ckpt_dir)

    def _mono_sets(self, set_id: int):
        out = []
        for lang in self.languages:
            entries = self.manifest.mono_for(lang, set_id)
            for entry in entries:
                out.append(self.manifest.load_mono(entry))
        return out

    def _bt_stage_for_iteration(self, iteration: int) -> StageSpec:
        for s in self.spec.stages:
            if s.kind == "bt_iteration" and s.iteration == iteration:
                return s
        raise ConfigError(f"no bt_iteration stage with iteration {iteration}")

    def _load_stage_synthetic(self, stage: StageSpec) -> list[SyntheticCorpus]:
        base = self._stage_dir(stage) / "synthetic"
        dirs = sorted(base.glob(f"iter{stage.iteration}.*"))
        if not dirs:
            raise DataError(f"stage {stage.label!r} left no synthetic data under {base}")
        return [load_synthetic(d) for d in dirs]

    def _run_bt_iteration(self, stage: StageSpec) -> dict:
        sub = self.ensure_subword()
        gen_record = self._results.get(stage.generator)
        if gen_record is None:
            raise ConfigError(f"generator stage {stage.generator!r} has not run")
        generator = load_checkpoint(gen_record["checkpoints"]["model"])
        gen_fp = fingerprint_checkpoint(generator)
        max_len = self.spec.model.max_len
        if stage.iteration == 1:
            self.log(f"[{stage.label}] generating synthetic data (iteration 1)")
            corpora = []
            for mono in self._mono_sets(1):
                plan = plan_shares(mono, self.languages, stage.share_mode,
                                   seed=stage_seed(self.spec.seed, "shares", 1, mono.lang))
                corpora.append(generate(
                    generator, sub, self.languages, mono, plan,
                    iteration=1, include_forward=stage.include_forward,
                    max_len=max_len,
                ))
        else:
            self.log(f"[{stage.label}] generating synthetic data (iteration 2)")
            corpora = iterate(
                generator, sub, self.languages,
                self._mono_sets(1), self._mono_sets(2),
                stage.share_mode, seed=stage_seed(self.spec.seed, "shares", 2),
                include_forward=stage.include_forward, max_len=max_len,
            )
        for corpus in corpora:
            save_synthetic(corpus, self._stage_dir(stage) / "synthetic"
                           / f"iter{corpus.iteration}.{corpus.source_lang}")
        # Reload all batches from disk so training sees the same pair order
        # whether the earlier iteration ran in this process or a previous one.
        synthetic: list[SyntheticCorpus] = []
        for it in range(1, stage.iteration + 1):
            source = stage if it == stage.iteration else self._bt_stage_for_iteration(it)
            synthetic.extend(self._load_stage_synthetic(source))
        human = [self._train_by_direction[d] for d in sorted(self._train_by_direction)]
        merged = merge(human, synthetic)
        self.log(f"[{stage.label}] training on {len(merged)} pairs "
                 f"({sum(len(c) for c in synthetic)} synthetic)")
        init_state, parent_fp = (None, None)
        if stage.init_from:
            init_state, parent_fp = self._init_state_from(stage.init_from)
        ckpt_dir = self._stage_dir(stage)
        best, init_fp = self._train_stage_model(
            stage, factored=True,
            train_pairs=merged.pairs,
            valid_pairs=self.valid_union,
            init_state=init_state,
            ckpt_dir=ckpt_dir,
            seed_parts=(stage.label, stage.iteration),
        )
        extra = {
            "generator_fingerprint": gen_fp,
            "merged_counts": merged.counts,
            "synthetic_pairs": sum(len(c) for c in synthetic),
        }
        return self._single_model_record(stage, best, init_fp, parent_fp, ckpt_dir, extra)

    def _run_fine_tune(self, stage: StageSpec) -> dict:
        sub = self.ensure_subword()
        record = self._results.get(stage.init_from or "")
        if record is None:
            raise ConfigError(f"stage {stage.init_from!r} has not run")
        parent = load_checkpoint(record["checkpoints"]["model"])
        parent_fp = fingerprint_checkpoint(parent)
        direction = stage.direction
        if direction not in self._train_by_direction:
            raise ConfigError(f"no training data for fine-tune direction {direction!r}")
        self.log(f"[{stage.label}] fine-tuning on {direction}")
        ckpt_dir = self._stage_dir(stage)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(parent, ckpt_dir / "init.ckpt")
        cfg_train = dataclasses.replace(
            self.spec.train, seed=stage_seed(self.spec.seed, stage.label))
        result = fine_tune(
            parent, sub, self.languages,
            self._train_by_direction[direction].pairs,
            self._valid_by_direction[direction].pairs,
            cfg_train, ckpt_dir=ckpt_dir,
        )
        report = self.evaluate(result.best, stage.label, directions=[direction])
        return {
            "kind": stage.kind, "label": stage.label,
            "bleu": report.bleu, "chrf": report.chrf,
            "bleu_low": None, "chrf_low": None,
            "bleu_signature": report.bleu_signature,
            "chrf_signature": report.chrf_signature,
            "checkpoints": {"model": str(ckpt_dir / "best.ckpt")},
            "init_fingerprints": {"model": parent_fp},
            "parent_fingerprint": parent_fp,
            "direction": direction,
        }

    def _run_transfer(self, stage: StageSpec) -> dict:
        baselines = next((r for r in self._results.values()
                          if r["kind"] == "bilingual_baselines"), None)
        if baselines is None:
            raise ConfigError("transfer requires a completed bilingual_baselines stage")
        parent_path = baselines["checkpoints"].get(stage.parent_pair)
        if parent_path is None:
            raise ConfigError(f"no bilingual baseline for parent pair {stage.parent_pair!r}")
        parent = load_checkpoint(parent_path)
        parent_fp = fingerprint_checkpoint(parent)
        child = stage.child_pair
        if child not in self._train_by_direction:
            raise ConfigError(f"no training data for child pair {child!r}")
        self.log(f"[{stage.label}] transferring {stage.parent_pair} -> {child}")
        ckpt_dir = self._stage_dir(stage)
        best, init_fp = self._train_stage_model(
            stage, factored=False,
            train_pairs=self._train_by_direction[child].pairs,
            valid_pairs=self._valid_by_direction[child].pairs,
            init_state=parent.model_state,
            ckpt_dir=ckpt_dir,
            seed_parts=(stage.label, child),
        )
        report = self.evaluate(best, stage.label, directions=[child])
        return {
            "kind": stage.kind, "label": stage.label,
            "bleu": report.bleu, "chrf": report.chrf,
            "bleu_low": None, "chrf_low": None,
            "bleu_signature": report.bleu_signature,
            "chrf_signature": report.chrf_signature,
            "checkpoints": {"model": str(ckpt_dir / "best.ckpt")},
            "init_fingerprints": {"model": init_fp},
            "parent_fingerprint": parent_fp,
            "parent_pair": stage.parent_pair,
            "child_pair": child,
        }

    # -- driver ------------------------------------------------------------------

    _RUNNERS = {
        "bilingual_baselines": _run_bilingual_baselines,
        "multilingual_baseline": _run_multilingual,
        "bt_iteration": _run_bt_iteration,
        "fine_tune": _run_fine_tune,
        "transfer": _run_transfer,
    }

    def run(self, resume: bool = True) -> ExperimentReport:
        torch.set_num_threads(1)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.ensure_subword(resume=resume)
        state_path = self.out_dir / "state.json"
        completed: list[str] = []
        rows: list[ScoreReport] = []
        zero_shot: dict[str, dict[str, float]] = {}
        for stage in self.spec.stages:
            record = self._load_record(stage) if resume else None
            if record is None:
                started = time.monotonic()
                try:
                    record = self._RUNNERS[stage.kind](self, stage)
                except Exception as err:
                    state_path.write_text(json.dumps({
                        "completed": completed, "failed": stage.label,
                        "error": f"{type(err).__name__}: {err}",
                    }, indent=2) + "\n", encoding="utf-8")
                    raise
                record["wall_time"] = round(time.monotonic() - started, 3)
                self._write_record(stage, record)
            else:
                self.log(f"[{stage.label}] reusing completed stage")
            self._results[stage.label] = record
            completed.append(stage.label)
            state_path.write_text(json.dumps({
                "completed": completed, "failed": None, "error": None,
            }, indent=2) + "\n", encoding="utf-8")
            rows.append(self._row_from_record(record))
            if record.get("zero_shot"):
                zero_shot[stage.label] = record["zero_shot"]
        report = ExperimentReport(name=self.spec.name, rows=rows,
                                  zero_shot=zero_shot, out_dir=self.out_dir)
        self._write_reports(report)
        return report

    def _write_reports(self, report: ExperimentReport) -> None:
        (self.out_dir / "report.bleu.tsv").write_text(
            report_table(report.rows, self.table_pairs, self.high_pair, metric="bleu"),
            encoding="utf-8")
        (self.out_dir / "report.chrf.tsv").write_text(
            report_table(report.rows, self.table_pairs, self.high_pair, metric="chrf"),
            encoding="utf-8")
        payload = {
            "name": report.name,
            "seed": self.spec.seed,
            "spec_hash": self.spec_hash,
            "manifest_hash": self.manifest_hash,
            "rows": [
                {
                    "label": r.label,
                    "bleu": r.bleu,
                    "chrf": r.chrf,
                    "bleu_low": r.bleu_low,
                    "chrf_low": r.chrf_low,
                }
                for r in report.rows
            ],
            "zero_shot": report.zero_shot,
            "bleu_signature": report.rows[0].bleu_signature if report.rows else "",
            "chrf_signature": report.rows[0].chrf_signature if report.rows else "",
        }
        (self.out_dir / "report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run(spec: ExperimentSpec, out_dir: Path | str, resume: bool = True,
        log: Callable[[str], None] = print) -> ExperimentReport:
    return ExperimentRun(spec, out_dir, log=log).run(resume=resume)


# -- comparison ----------------------------------------------------------------


@dataclass
class CompareResult:
    left: str
    right: str
    metric: str
    deltas: dict[str, float]
    aggregate_delta: float | None
    winners: dict[str, str]  # direction -> label with the higher score (ties: left)

    def table(self) -> str:
        directions = sorted(self.deltas)
        lines = ["\t".join(["direction", "delta", "best"])]
        for d in directions:
            lines.append(f"{d}\t{self.deltas[d]:+.1f}\t{self.winners[d]}")
        if self.aggregate_delta is not None:
            lines.append(f"aggregate\t{self.aggregate_delta:+.1f}\t")
        return "\n".join(lines) + "\n"


def compare(left: ScoreReport, right: ScoreReport, metric: str = "bleu") -> CompareResult:
    """Per-direction score deltas (left minus right), rounded like the score
    tables; directions must match exactly."""
    a = left.bleu if metric == "bleu" else left.chrf
    b = right.bleu if metric == "bleu" else right.chrf
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))
        only_b = sorted(set(b) - set(a))
        raise ScoreInputError(
            f"direction sets differ: only-left={only_a}, only-right={only_b}"
        )
    decimals = 1 if metric == "bleu" else 3
    deltas = {d: round_half_up(a[d] - b[d], decimals) for d in a}
    winners = {d: (left.label if a[d] >= b[d] else right.label) for d in a}
    agg_a = left.bleu_low if metric == "bleu" else left.chrf_low
    agg_b = right.bleu_low if metric == "bleu" else right.chrf_low
    agg = None
    if agg_a is not None and agg_b is not None:
        agg = round_half_up(agg_a - agg_b, decimals)
    return CompareResult(left=left.label, right=right.label, metric=metric,
                         deltas=deltas, aggregate_delta=agg, winners=winners)
