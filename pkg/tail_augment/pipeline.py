"""
Two-stage training orchestrator.

Stage 1 trains the representation and the full classifier. Stage 2 collects
head-label relations, builds the head eigenbasis, trains the transfer matrix,
generates tail instances and retrains the tail rows of the classifier. Every
stage reads its inputs from, and writes its outputs to, a Checkpoint, so the
CLI can run the stages one at a time or all at once with identical results.
"""

import copy
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint as ckpt_io
from .checkpoint import Checkpoint
from .corpus import (
    Corpus,
    EmbeddingTable,
    FeatureFile,
    LabelSpace,
    load_corpus,
    load_embeddings,
    load_features,
    split_head_tail,
    write_features,
)
from .eigenbasis import scatter, top_eigen
from .errors import StateError, TailAugmentError, ValidationError
from .extractor import (
    AttentionExtractor,
    ClassifierWeights,
    TrainConfig,
    predict,
    represent_all,
    train_classifier,
    train_stage1,
)
from .generator import (
    GeneratedSet,
    Prototype,
    TransferConfig,
    TransferMatrix,
    choose_subset,
    generate,
    losses,
    tail_prototypes,
    train_W,
)
from .metrics import EvalReport, evaluate
from .relations import RelationSet, collect, relation_stats
from .tailadjust import AdjustConfig, adjust

logger = logging.getLogger(__name__)

CONFIG_ENV = "TAIL_AUGMENT_CONFIG"

MODES = ("no-aug", "aug-no-c", "aug-gen", "aug-gen-div", "complete")
STAGES = ("train-base", "collect", "eigen", "generate", "adjust", "eval")
SWEEP_PARAMETERS = ("pairs_p", "tail_count", "head_count", "mode")

# Fields that never influence results and stay out of the stored config.
RUNTIME_FIELDS = ("workers", "checkpoint", "out", "dump_generated")
STAGE1_FIELDS = (
    "train_corpus", "train_features", "embeddings", "max_words", "seed", "lr", "epochs", "batch_size",
    "classifier_epochs", "classifier_batch_size",
    "adam_beta1", "adam_beta2", "adam_eps", "early_stop_tol", "freeze_embeddings", "heads",
    "attention_dim", "repr_dim",
)

# Checkpoint entries produced by each stage.
STAGE_OUTPUTS = {
    "train-base": ("labels", "stage1", "W_stage1", "W1", "W2", "P_agg", "embeddings"),
    "collect": ("space", "relations", "relation_left", "relation_right"),
    "eigen": ("Q", "eigenvalues", "eigen"),
    "generate": ("prototypes", "prototype_docs", "W", "transfer", "generated", "relation_index", "generated_labels"),
    "adjust": ("W_a", "adjust"),
    "eval": ("report",),
}


@dataclass
class PipelineConfig:
    """Every setting of a run. Field names double as config-file keys."""

    # inputs and outputs
    train_corpus: Optional[str] = None
    test_corpus: Optional[str] = None
    embeddings: Optional[str] = None
    train_features: Optional[str] = None
    test_features: Optional[str] = None
    checkpoint: Optional[str] = None
    out: Optional[str] = None
    dump_generated: Optional[str] = None
    max_words: int = 500

    # run shape
    mode: str = "complete"
    tail_count: int = 24
    pairs_p: int = 64
    eigen_rank: int = 100
    eigen_solver: str = "auto"
    seed: int = 0
    workers: int = 1

    # stage 1
    lr: float = 0.01
    epochs: int = 100
    batch_size: int = 64
    # feature mode fits only W_a; batch size 0 means one full-corpus step per epoch
    classifier_epochs: int = 2000
    classifier_batch_size: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_tol: float = 1e-4
    freeze_embeddings: bool = True
    heads: int = 4
    attention_dim: int = 100
    repr_dim: int = 100

    # transfer matrix
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.1
    transfer_lr: float = 0.01
    transfer_epochs: int = 300
    q: int = 5
    per_label: bool = False
    relation_subset: Optional[int] = None

    # tail adjustment
    adjust_lr: float = 0.01
    adjust_epochs: int = 100
    negative_policy: str = "balanced"
    include_real_shots: bool = True
    threshold: float = 0.5

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.pairs_p < 1:
            raise ValidationError(f"pairs_p must be >= 1, got {self.pairs_p}")
        if self.eigen_rank < 1:
            raise ValidationError(f"eigen_rank must be >= 1, got {self.eigen_rank}")
        if self.classifier_epochs < 1:
            raise ValidationError(f"classifier_epochs must be >= 1, got {self.classifier_epochs}")
        if self.classifier_batch_size < 0:
            raise ValidationError(f"classifier_batch_size must be >= 0, got {self.classifier_batch_size}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if self.tail_count < 0:
            raise ValidationError(f"tail_count must be >= 0, got {self.tail_count}")
        if self.train_corpus is None:
            raise ValidationError("train_corpus is required")
        if self.train_features is None and self.embeddings is None:
            raise ValidationError("either train_features or embeddings is required")
        self.train_config().validate()
        self.transfer_config().validate()
        self.adjust_config().validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, epochs=self.epochs, batch_size=self.batch_size, adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2, adam_eps=self.adam_eps, seed=self.seed,
            early_stop_tol=self.early_stop_tol, freeze_embeddings=self.freeze_embeddings, heads=self.heads,
            attention_dim=self.attention_dim, repr_dim=self.repr_dim,
        )

    def classifier_config(self, documents: int) -> TrainConfig:
        """Stage-1 settings for fitting W_a on fixed features."""
        return replace(
            self.train_config(), epochs=self.classifier_epochs,
            batch_size=self.classifier_batch_size or max(documents, 1),
        )

    def transfer_config(self) -> TransferConfig:
        """Transfer settings with the mode's loss terms switched off."""
        beta, gamma = self.beta, self.gamma
        if self.mode == "aug-gen":
            beta = gamma = 0.0
        elif self.mode == "aug-gen-div":
            beta = 0.0
        return TransferConfig(
            alpha=self.alpha, beta=beta, gamma=gamma, lr=self.transfer_lr, epochs=self.transfer_epochs,
            seed=self.seed, q=self.q, per_label=self.per_label, relation_subset=self.relation_subset,
        )

    def adjust_config(self) -> AdjustConfig:
        return AdjustConfig(
            lr=self.adjust_lr, epochs=self.adjust_epochs, seed=self.seed, negative_policy=self.negative_policy,
            include_real_shots=self.include_real_shots, threshold=self.threshold,
        )

    def to_dict(self) -> dict:
        """Result-relevant settings (runtime-only fields excluded)."""
        return {key: value for key, value in asdict(self).items() if key not in RUNTIME_FIELDS}

    def stage1_key(self) -> dict:
        data = asdict(self)
        return {key: data[key] for key in STAGE1_FIELDS}


# ---------------------------------------------------------------------------
# Configuration loading
# ---------------------------------------------------------------------------

_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


def _field_types() -> Dict[str, type]:
    return {f.name: f.type for f in fields(PipelineConfig)}


def coerce_value(key: str, raw: str, where: str = "") -> object:
    """Convert a config-file string to the type of PipelineConfig.<key>."""
    types = _field_types()
    prefix = f"{where}: " if where else ""
    if key not in types:
        raise ValidationError(f"{prefix}unknown config key {key!r}")
    kind = types[key]
    text = raw.strip()
    optional = kind in (Optional[str], Optional[int])
    if optional and text.lower() in ("", "none"):
        return None
    base = {Optional[str]: str, Optional[int]: int}.get(kind, kind)
    if base is bool:
        if text.lower() in _TRUE:
            return True
        if text.lower() in _FALSE:
            return False
        raise ValidationError(f"{prefix}{key} expects true/false, got {raw!r}")
    try:
        return base(text)
    except ValueError:
        raise ValidationError(f"{prefix}{key} expects {base.__name__}, got {raw!r}") from None


def read_config_file(path: str) -> dict:
    """Parse `key = value` lines; `#` starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = coerce_value(key, value, where=f"{path}:{line_no}")
    logger.debug("Read %d settings from %s", len(values), path)
    return values


def build_config(config_path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """
    Defaults, then the config file (argument or TAIL_AUGMENT_CONFIG), then overrides.

    Overrides set to None are ignored.
    """
    config_path = config_path or os.environ.get(CONFIG_ENV)
    values = read_config_file(config_path) if config_path else {}
    types = _field_types()
    for key, value in (overrides or {}).items():
        if key not in types:
            raise ValidationError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    return PipelineConfig(**values)


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------

class Inputs:
    """Lazily loaded corpora, embeddings and feature files of one config."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._train: Optional[Tuple[Corpus, LabelSpace]] = None
        self._test: Optional[Corpus] = None
        self._table: Optional[EmbeddingTable] = None
        self._features: Dict[str, FeatureFile] = {}

    @property
    def corpus(self) -> Corpus:
        return self._load_train()[0]

    @property
    def base_space(self) -> LabelSpace:
        """Label space of the training corpus with every label in the head."""
        return self._load_train()[1]

    def _load_train(self) -> tuple:
        if self._train is None:
            if self.config.train_corpus is None:
                raise ValidationError("train_corpus is required")
            self._train = load_corpus(self.config.train_corpus, self.config.max_words, require_labels=True)
        return self._train

    @property
    def test_corpus(self) -> Optional[Corpus]:
        if self._test is None and self.config.test_corpus is not None:
            corpus, _ = load_corpus(self.config.test_corpus, self.config.max_words, require_labels=False)
            self._test, dropped = corpus.restrict_labels(self.base_space)
            if dropped:
                logger.warning("Test corpus: %d label occurrences unknown to training were dropped", dropped)
        return self._test

    @property
    def table(self) -> EmbeddingTable:
        if self._table is None:
            if self.config.embeddings is None:
                raise ValidationError("an embeddings file is required when representations are not given")
            self._table = load_embeddings(self.config.embeddings)
        return self._table

    def features(self, which: str) -> Optional[FeatureFile]:
        path = self.config.train_features if which == "train" else self.config.test_features
        if path is None:
            return None
        if which not in self._features:
            self._features[which] = load_features(path)
        return self._features[which]


@contextmanager
def stage_scope(name: str):
    """Tag errors raised inside a stage with its name."""
    logger.info("Stage %s: start", name)
    try:
        yield
    except TailAugmentError as e:
        if e.stage is None:
            e.stage = name
        logger.error("Stage %s failed: %s", name, e)
        raise
    logger.info("Stage %s: done", name)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

class Pipeline:
    """
    Runs the stages against one checkpoint.

    Each stage method reads what it needs from self.ckpt, writes its outputs
    back, drops outputs of later stages, and saves the checkpoint when a path
    is configured.
    """

    def __init__(self, config: PipelineConfig, ckpt: Optional[Checkpoint] = None, inputs: Optional[Inputs] = None):
        config.validate()
        self.config = config
        self.inputs = inputs or Inputs(config)
        if ckpt is None:
            path = config.checkpoint
            ckpt = ckpt_io.load(path) if path and Path(path).exists() else Checkpoint()
        self.ckpt = ckpt
        self._train_R: Optional[np.ndarray] = None

    # -- shared state -------------------------------------------------------

    @property
    def space(self) -> LabelSpace:
        """Base label space split with the configured tail_count."""
        return split_head_tail(self.inputs.base_space, self.config.tail_count)

    def _checked_space(self) -> LabelSpace:
        space = self.space
        stored = self.ckpt.require_meta("space")
        if stored != space.to_dict():
            raise StateError("checkpoint relations were collected with a different head/tail split; rerun collect")
        return space

    def _stage1_classifier(self, space: LabelSpace) -> ClassifierWeights:
        return ClassifierWeights.from_label_order(self.ckpt.matrix("W_stage1"), space)

    def _extractor(self) -> AttentionExtractor:
        stage1 = self.ckpt.require_meta("stage1")
        frozen = stage1["freeze_embeddings"]
        embeddings = self.inputs.table.matrix_with_oov() if frozen else self.ckpt.matrix("embeddings")
        return AttentionExtractor(
            embeddings=embeddings, W1=self.ckpt.matrix("W1"), W2=self.ckpt.matrix("W2"),
            P_agg=self.ckpt.matrix("P_agg"), freeze_embeddings=frozen,
        )

    def _represent(self, corpus: Corpus, which: str) -> np.ndarray:
        source = self.ckpt.require_meta("stage1")["source"]
        if source == "features":
            features = self.inputs.features(which)
            if features is None:
                raise ValidationError(f"stage 1 used fixed features; {which}_features is required")
            return represent_all(features, corpus)
        return represent_all(self._extractor(), corpus, self.inputs.table, workers=self.config.workers)

    def train_representations(self) -> np.ndarray:
        if self._train_R is None:
            self._train_R = self._represent(self.inputs.corpus, "train")
        return self._train_R

    def _relations(self) -> RelationSet:
        space = self._checked_space()
        return RelationSet(
            heads=space.head,
            vectors=self.ckpt.array("relations"),
            left=self.ckpt.matrix("relation_left").astype(np.int64),
            right=self.ckpt.matrix("relation_right").astype(np.int64),
            doc_ids=tuple(self.inputs.corpus.ids),
        )

    def _prototypes(self) -> List[Prototype]:
        docs = self.ckpt.require_meta("prototype_docs")
        matrix = self.ckpt.matrix("prototypes")
        return [
            Prototype(label=entry["label"], o=matrix[t].copy(), q_used=len(entry["doc_ids"]), doc_ids=tuple(entry["doc_ids"]))
            for t, entry in enumerate(docs)
        ]

    def _generated(self) -> GeneratedSet:
        labels = self.ckpt.require_meta("generated_labels")
        return GeneratedSet(
            tails=tuple(labels["tails"]), heads=tuple(labels["heads"]), vectors=self.ckpt.array("generated"),
            relation_index=self.ckpt.matrix("relation_index").astype(np.int64),
        )

    def _complete(self, stage: str) -> None:
        stages = [s for s in self.ckpt.get_meta("stages", []) if STAGES.index(s) < STAGES.index(stage)]
        stages.append(stage)
        self.ckpt.set_meta("stages", stages)
        self.ckpt.set_meta("config", self.config.to_dict())
        if self.config.checkpoint:
            ckpt_io.save(self.config.checkpoint, self.ckpt)

    def _invalidate_from(self, stage: str) -> None:
        for later in STAGES[STAGES.index(stage):]:
            self.ckpt.drop(*STAGE_OUTPUTS[later])

    # -- stages -------------------------------------------------------------

    def train_base(self) -> None:
        """Stage 1: train (or, with fixed features, fit only) the full classifier."""
        with stage_scope("train-base"):
            self._invalidate_from("train-base")
            self._train_R = None
            corpus, base = self.inputs.corpus, self.inputs.base_space
            features = self.inputs.features("train")
            if features is not None:
                R = represent_all(features, corpus)
                cls, history = train_classifier(R, corpus.targets(base.labels), base,
                                                self.config.classifier_config(len(corpus)))
                self.ckpt.set_meta("stage1", {"source": "features", "freeze_embeddings": True, "history": history,
                                              "key": self.config.stage1_key()})
            else:
                ex, cls, history = train_stage1(corpus, self.inputs.table, base, self.config.train_config())
                for name in ("W1", "W2", "P_agg"):
                    self.ckpt.set_matrix(name, getattr(ex, name))
                if not ex.freeze_embeddings:
                    self.ckpt.set_matrix("embeddings", ex.embeddings)
                self.ckpt.set_meta("stage1", {"source": "extractor", "freeze_embeddings": ex.freeze_embeddings,
                                              "history": history, "key": self.config.stage1_key()})
            W_label_order = np.empty_like(cls.W_a)
            W_label_order[base.appearance_permutation()] = cls.W_a
            self.ckpt.set_matrix("W_stage1", W_label_order)
            self.ckpt.set_meta("labels", base.to_dict())
        self._complete("train-base")

    def has_stage1(self) -> bool:
        stage1 = self.ckpt.get_meta("stage1")
        return (
            "W_stage1" in self.ckpt.matrices
            and stage1 is not None
            and stage1.get("key") == self.config.stage1_key()
            and self.ckpt.get_meta("labels") == self.inputs.base_space.to_dict()
        )

    def collect(self) -> RelationSet:
        with stage_scope("collect"):
            self._invalidate_from("collect")
            space = self.space
            relations = collect(self.train_representations(), self.inputs.corpus, space, self.config.pairs_p,
                                self.config.seed, workers=self.config.workers)
            self.ckpt.set_meta("space", space.to_dict())
            self.ckpt.set_array("relations", relations.vectors)
            self.ckpt.set_matrix("relation_left", relations.left.astype(np.float64))
            self.ckpt.set_matrix("relation_right", relations.right.astype(np.float64))
            stats = relation_stats(relations)
            logger.info("Relation mean norm %.4f, global mean norm %.4f", stats["mean_norm"], stats["global_mean_norm"])
            for head, norm in stats["per_label_mean_norm"].items():
                logger.debug("relations of %s: mean norm %.4f", head, norm)
        self._complete("collect")
        return relations

    def eigen(self) -> np.ndarray:
        with stage_scope("eigen"):
            self._invalidate_from("eigen")
            space = self._checked_space()
            R = self.train_representations()
            S = scatter(R, self.inputs.corpus, space)
            m = self.config.eigen_rank
            if m > S.shape[0]:
                logger.warning("eigen_rank %d exceeds representation dim %d; using %d", m, S.shape[0], S.shape[0])
                m = S.shape[0]
            basis = top_eigen(S, m, solver=self.config.eigen_solver)
            self.ckpt.set_matrix("Q", basis.Q)
            self.ckpt.set_matrix("eigenvalues", basis.eigenvalues[None, :])
            self.ckpt.set_meta("eigen", {"rank": basis.rank, "explained": basis.explained_ratio})
        self._complete("eigen")
        return basis.Q

    def generate(self) -> Optional[GeneratedSet]:
        """Prototypes, transfer matrix and generations; a no-op in no-aug mode."""
        with stage_scope("generate"):
            self._invalidate_from("generate")
            if self.config.mode == "no-aug":
                logger.info("Mode no-aug: no instances generated")
                generated = None
            else:
                generated = self._run_generate()
        self._complete("generate")
        return generated

    def _run_generate(self) -> GeneratedSet:
        space = self._checked_space()
        if not space.tail:
            raise ValidationError("no tail labels to augment (tail_count is 0)")
        relations = self._relations()
        Q = self.ckpt.matrix("Q")
        transfer_cfg = self.config.transfer_config()
        protos = tail_prototypes(self.train_representations(), self.inputs.corpus, space, transfer_cfg.q,
                                 self.config.seed)
        subset = None
        if transfer_cfg.relation_subset is not None:
            subset = choose_subset(relations, transfer_cfg.relation_subset, self.config.seed)

        if self.config.mode == "aug-no-c":
            W = TransferMatrix.identity(relations.dim, len(protos), per_label=transfer_cfg.per_label)
            start = losses(W, protos, relations, Q, transfer_cfg, subset)
            history = {key: [getattr(start, key)] for key in ("gen", "div", "var", "total")}
            logger.info("Mode aug-no-c: transfer matrix fixed at identity")
        else:
            W, history = train_W(protos, relations, Q, transfer_cfg, subset=subset, workers=self.config.workers)
        final = losses(W, protos, relations, Q, transfer_cfg, subset)

        generated = generate(W, protos, relations, subset)
        self.ckpt.set_matrix("prototypes", np.stack([proto.o for proto in protos]))
        self.ckpt.set_meta("prototype_docs", [{"label": p.label, "doc_ids": list(p.doc_ids)} for p in protos])
        self.ckpt.set_array("W", W.W)
        self.ckpt.set_meta("transfer", {
            "mode": self.config.mode,
            "history": history,
            "initial": {key: values[0] / final.count for key, values in history.items()},
            "final": final.per_instance(),
            "count": final.count,
        })
        self.ckpt.set_array("generated", generated.vectors)
        self.ckpt.set_matrix("relation_index", generated.relation_index.astype(np.float64))
        self.ckpt.set_meta("generated_labels", {"tails": list(generated.tails), "heads": list(generated.heads)})
        if self.config.dump_generated:
            write_features(self.config.dump_generated, generated.to_feature_file())
            logger.info("Wrote %d generations to %s", len(generated), self.config.dump_generated)
        return generated

    def adjust(self) -> ClassifierWeights:
        with stage_scope("adjust"):
            self._invalidate_from("adjust")
            space = self._checked_space()
            base_cls = self._stage1_classifier(space)
            if "generate" not in self.ckpt.get_meta("stages", []):
                raise StateError("generate has not run on this checkpoint")
            if self.config.mode == "no-aug":
                cls = base_cls
                self.ckpt.set_meta("adjust", {"histories": {}})
            else:
                cls, histories = adjust(base_cls, self._generated(), self.train_representations(),
                                        self.inputs.corpus, space, self.config.adjust_config(),
                                        workers=self.config.workers)
                self.ckpt.set_meta("adjust", {"histories": histories})
            self.ckpt.set_matrix("W_a", cls.W_a)
        self._complete("adjust")
        return cls

    def evaluate(self) -> EvalReport:
        with stage_scope("eval"):
            self._invalidate_from("eval")
            space = self._checked_space()
            cls = ClassifierWeights(W_a=self.ckpt.matrix("W_a"), n_head=space.head_count)
            test = self.inputs.test_corpus
            if test is None:
                logger.warning("No test corpus configured; evaluating on the training corpus")
                test, R = self.inputs.corpus, self.train_representations()
            else:
                R = self._represent(test, "test")
            report = evaluate(predict(cls, R), test.targets(space.ordered), space, self.config.threshold)
            self.ckpt.set_meta("report", report.to_dict())
        self._complete("eval")
        return report

    def run(self) -> EvalReport:
        """All stages in order, reusing a matching stage-1 checkpoint."""
        if self.has_stage1():
            logger.info("Reusing stage 1 from the checkpoint")
            self._invalidate_from("collect")
        else:
            self.train_base()
        self.collect()
        self.eigen()
        self.generate()
        self.adjust()
        return self.evaluate()


def run_pipeline(config: PipelineConfig) -> Tuple[EvalReport, Checkpoint]:
    pipeline = Pipeline(config)
    report = pipeline.run()
    return report, pipeline.ckpt


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def parse_sweep_values(parameter: str, raw: Sequence[str]) -> list:
    if parameter not in SWEEP_PARAMETERS:
        raise ValidationError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}, got {parameter!r}")
    if not raw:
        raise ValidationError("sweep needs at least one value")
    if parameter == "mode":
        for value in raw:
            if value not in MODES:
                raise ValidationError(f"unknown mode {value!r}")
        return list(raw)
    try:
        return [int(value) for value in raw]
    except ValueError:
        raise ValidationError(f"{parameter} values must be integers, got {list(raw)}") from None


def sweep(config: PipelineConfig, parameter: str, values: Sequence) -> List[Tuple[object, EvalReport]]:
    """
    One pipeline run per value, all sharing one stage-1 result.

    Only the base run writes config.checkpoint; per-value runs stay in memory.
    """
    values = parse_sweep_values(parameter, [str(v) for v in values])
    base = Pipeline(config)
    if not base.has_stage1():
        base.train_base()
    inputs = base.inputs
    n_labels = len(inputs.base_space)

    results = []
    for value in values:
        key, setting = parameter, value
        if parameter == "head_count":
            key, setting = "tail_count", n_labels - value
        run_config = replace(config, **{key: setting}, checkpoint=None, dump_generated=None)
        logger.info("Sweep %s=%s", parameter, value)
        shared = Checkpoint(matrices=base.ckpt.matrices, meta=copy.deepcopy(base.ckpt.meta))
        pipeline = Pipeline(run_config, ckpt=shared, inputs=inputs)
        results.append((value, pipeline.run()))
    return results


def sweep_table(parameter: str, results: Sequence[Tuple[object, EvalReport]]) -> str:
    """Tab-separated table: one header line, one row per swept value."""
    if not results:
        return f"{parameter}\n"
    keys = list(results[0][1].flat())
    lines = ["\t".join([parameter] + keys)]
    for value, report in results:
        flat = report.flat()
        lines.append("\t".join([str(value)] + ["NA" if flat[k] is None else repr(flat[k]) for k in keys]))
    return "\n".join(lines) + "\n"
