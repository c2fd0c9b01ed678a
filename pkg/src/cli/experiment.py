"""
Experiment configuration and orchestration: one ExperimentConfig describes a
model family, its inputs and priors, a speaker split and the training presets;
an Experiment loads the corpus once, trains per seed and scores the test speakers.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Sequence
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
import toml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.articulatory import (
    PT_NAMES,
    VTV_NAMES,
    PriorTable,
    Provenance,
    TrackKind,
    compute_statistical_priors,
    load_prior_table,
    write_prior_table,
)
from src.config import get_config
from src.datasets import (
    AlignedUtterance,
    DatasetManifest,
    SplitKind,
    SplitPlan,
    load_corpus,
    load_manifest,
    make_split,
)
from src.errors import ConfigError, DataError
from src.evaluation import ScoreReport, run_protocol, score_baseline, score_predictions
from src.models import (
    ArticModel,
    AutoencoderSpec,
    BlstmModel,
    BlstmSpec,
    LossConfig,
    ResDnnSpec,
    WeaklySupervisedModel,
    WindowedFrames,
    generate_afs,
)
from src.models.blstm import InputFeatures
from src.models.resdnn import ResidualKind
from src.numerics import OptimizerConfig
from src.training import TrainingLog, blstm_inputs, build_weak_model, train_blstm, train_weakly
from src.utils import DEFAULT_LF_TABLE

ModelKind = Literal["blstm", "ae1", "ae2", "resdnn", "baseline"]
Scale = Literal["full", "desk"]

MODEL_NAMES = {"blstm": "BLSTM", "ae1": "AE1", "ae2": "AE2", "resdnn": "ResDNN", "baseline": "Baseline"}
WEAK_KINDS = ("ae1", "ae2", "resdnn", "baseline")
CONTEXT_PRESETS = {"full": 12, "desk": 6}
BLSTM_LEARNING_RATES = {"full": 0.1, "desk": 0.005}

EXPERIMENT_FILE = "experiment.toml"
PRIORS_FILE = "priors.txt"
LOG_FILE = "training_log.json"


class ExperimentConfig(BaseModel):
    """One training/evaluation run; unset hyper-parameters come from the scale preset"""

    model_config = ConfigDict(extra="forbid")

    model: ModelKind = "ae2"
    inputs: InputFeatures = "mfcc"
    target: Literal["pt", "vtv"] = "vtv"
    scale: Scale = "full"
    manifest: Path | None = None
    prior_table: Path | None = Field(default=None, description="Expert (LF) table; also seeds VEL/GLO of SFs")
    provenance: Provenance = "LF"
    prior_speakers: list[str] = Field(default_factory=list, description="SF source speakers")
    split: SplitKind = "matched"
    split_plan: Path | None = None
    split_seed: int = 0
    seeds: list[int] = Field(default_factory=lambda: [1, 2], min_length=1)
    single_speaker: str | None = Field(default=None, description="Train the BLSTM on this speaker only")
    transductive: bool = True
    context: int | None = Field(default=None, ge=0)
    residual: ResidualKind = "scalar"
    average_overlaps: bool = False
    loss: LossConfig = Field(default_factory=LossConfig)
    optimizer: OptimizerConfig | None = None
    max_epochs: int | None = Field(default=None, ge=1)
    patience: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_combination(self) -> "ExperimentConfig":
        if self.model in WEAK_KINDS:
            if self.prior_table is None:
                raise ValueError(f"{self.model} needs a prior_table")
            if self.target != "vtv":
                raise ValueError(f"{self.model} generates VTVs; target must be 'vtv'")
        elif self.prior_table is None and self.inputs != "mfcc":
            raise ValueError(f"blstm with '{self.inputs}' inputs needs a prior_table for the phone encoding")
        if self.single_speaker is not None and self.model != "blstm":
            raise ValueError("single_speaker applies to the blstm only")
        return self

    @property
    def weakly_supervised(self) -> bool:
        return self.model in ("ae1", "ae2", "resdnn")

    @property
    def table_provenance(self) -> Provenance:
        """Provenance of the prior table the run consumes"""
        if self.model == "blstm":
            return "SF" if "sf" in self.inputs else "LF"
        return self.provenance

    @property
    def track_kind(self) -> TrackKind:
        return TrackKind.PT if self.target == "pt" else TrackKind.VTV

    @property
    def feature_names(self) -> list[str]:
        return PT_NAMES if self.target == "pt" else VTV_NAMES

    @property
    def label(self) -> str:
        return MODEL_NAMES[self.model]

    def optimizer_config(self) -> OptimizerConfig:
        if self.optimizer is not None:
            return self.optimizer
        if self.model == "blstm":
            return OptimizerConfig(kind="adam", learning_rate=BLSTM_LEARNING_RATES[self.scale])
        return OptimizerConfig(kind="sgd-exp-decay")

    def epochs(self) -> int:
        cfg = get_config().training
        return self.max_epochs or (cfg.blstm_max_epochs if self.model == "blstm" else cfg.max_epochs)

    def stopping_patience(self) -> int:
        if self.patience is not None:
            return self.patience
        return 1 if self.scale == "full" else get_config().training.patience

    def window(self) -> int:
        return self.context if self.context is not None else CONTEXT_PRESETS[self.scale]


def _parse_value(text: str) -> object:
    """TOML scalar/array if it parses, the raw string otherwise"""
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict[str, object], overrides: Sequence[str]) -> dict[str, object]:
    """Apply `key=value` / `section.key=value` overrides in place"""
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override '{item}' is not key=value")
        *sections, leaf = key.strip().split(".")
        node = data
        for section in sections:
            child = node.setdefault(section, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override '{item}': '{section}' is not a section")
            node = child
        node[leaf] = _parse_value(value.strip())
    return data


def validation_message(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return f"{location}: {first['msg']}" if location else first["msg"]


def load_experiment(path: Path | None = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read an experiment TOML (optional) and apply CLI overrides"""
    data: dict[str, object] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read experiment config {path}: {e.strerror}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    apply_overrides(data, overrides)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {validation_message(e)}") from e


def save_experiment(cfg: ExperimentConfig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        toml.dump(cfg.model_dump(mode="json", exclude_none=True), f)


def relabel(utterances: Sequence[AlignedUtterance], table: PriorTable) -> list[AlignedUtterance]:
    """Same utterances with priors looked up in another table"""
    relabeled = []
    for utt in utterances:
        vectors = {phone: table.vector(phone) for phone in set(utt.labels)}
        relabeled.append(utt.model_copy(update={"priors": np.vstack([vectors[p] for p in utt.labels])}))
    return relabeled


class CorpusCache:
    """
    Aligned utterances and statistical tables of one manifest, shared by the
    experiments of a results table.
    """

    def __init__(self, manifest: DatasetManifest, seed_table: PriorTable):
        self.manifest = manifest
        self.seed_table = seed_table
        self._corpora: dict[tuple[tuple[str, ...], TrackKind], list[AlignedUtterance]] = {}
        self._tables: dict[tuple[str, tuple[str, ...]], PriorTable] = {}

    def corpus(self, speakers: Sequence[str], target: TrackKind) -> list[AlignedUtterance]:
        key = (tuple(sorted(speakers)), target)
        if key not in self._corpora:
            self._corpora[key] = load_corpus(
                self.manifest, key[0], self.seed_table, target, get_config().app.threads
            )
        return self._corpora[key]

    @cached_property
    def phones(self) -> list[str]:
        """Every phone labelled anywhere in the manifest"""
        speakers = list(self.manifest.speakers)
        return sorted({p for u in self.corpus(speakers, TrackKind.VTV) for p in u.labels})

    def statistical_table(self, provenance: Provenance, speakers: Sequence[str]) -> PriorTable:
        key = (provenance, tuple(sorted(speakers)))
        if key not in self._tables:
            utterances = self.corpus(speakers, TrackKind.VTV)
            missing = [u.utt_id for u in utterances if u.target is None]
            if missing:
                raise DataError(f"statistical priors need VTV tracks; {missing[0]} has none")
            self._tables[key] = compute_statistical_priors(
                [(u.speaker, u.target.frames, u.labels) for u in utterances],  # type: ignore[union-attr]
                self.seed_table,
                provenance,
                phones=self.phones,
            )
        return self._tables[key]


def resolve_plan(cfg: ExperimentConfig, manifest: DatasetManifest) -> SplitPlan:
    if cfg.split_plan is not None:
        return SplitPlan.load(cfg.split_plan)
    return make_split(manifest, cfg.split, cfg.split_seed)


def open_cache(cfg: ExperimentConfig, manifest: DatasetManifest | None = None) -> CorpusCache:
    if manifest is None:
        if cfg.manifest is None:
            raise ConfigError("no manifest given (set `manifest` or pass --manifest)")
        manifest = load_manifest(cfg.manifest)
    return CorpusCache(manifest, load_prior_table(cfg.prior_table or DEFAULT_LF_TABLE))


class Experiment:
    """One ExperimentConfig bound to a corpus and a speaker split"""

    def __init__(
        self,
        cfg: ExperimentConfig,
        cache: CorpusCache,
        plan: SplitPlan,
        table: PriorTable | None = None,
    ):
        self.cfg = cfg
        self.cache = cache
        self.plan = plan
        self._table = table

    @property
    def prior_speakers(self) -> list[str]:
        if self.cfg.prior_speakers:
            return self.cfg.prior_speakers
        count = {"SF1": 1, "SF2": 2}.get(self.cfg.table_provenance)
        return self.plan.train[:count] if count else self.plan.train

    @property
    def table(self) -> PriorTable:
        if self._table is None:
            provenance = self.cfg.table_provenance
            if provenance == "LF":
                self._table = self.cache.seed_table
            else:
                self._table = self.cache.statistical_table(provenance, self.prior_speakers)
        return self._table

    def utterances(self, speakers: Sequence[str], target: TrackKind | None = None) -> list[AlignedUtterance]:
        return relabel(self.cache.corpus(speakers, target or self.cfg.track_kind), self.table)

    @property
    def train_speakers(self) -> list[str]:
        speaker = self.cfg.single_speaker
        if speaker is None:
            return self.plan.train
        if speaker not in self.plan.train:
            raise ConfigError(f"single speaker '{speaker}' is not a training speaker of the split")
        return [speaker]

    def fit(self, seed: int) -> tuple[ArticModel, TrainingLog]:
        if self.cfg.model == "baseline":
            raise ConfigError("the baseline has nothing to train")
        if self.cfg.model == "blstm":
            return self._fit_blstm(seed)
        return self._fit_weak(seed)

    def _fit_blstm(self, seed: int) -> tuple[BlstmModel, TrainingLog]:
        cfg = self.cfg
        train = self.utterances(self.train_speakers)
        valid = self.utterances(self.plan.validation)
        inventory = self.table.phones if "phones" in cfg.inputs else []
        spec = BlstmSpec.preset(
            cfg.scale,
            input_dim=blstm_inputs(train[0], cfg.inputs, inventory).shape[1],
            output_dim=cfg.track_kind.dims,
            seed=seed,
            inputs=cfg.inputs,
            target=cfg.target,
            phone_inventory=inventory,
        )
        model = BlstmModel(spec)
        logger.info(f"Training BLSTM on {cfg.inputs} → {cfg.target} ({len(train)} utterances, seed {seed})")
        log = train_blstm(
            model, train, valid, cfg.optimizer_config(), seed, cfg.epochs(), cfg.stopping_patience()
        )
        return model, log

    def weak_spec(self, seed: int, acoustic_dim: int) -> AutoencoderSpec | ResDnnSpec:
        cfg = self.cfg
        if cfg.model == "resdnn":
            return ResDnnSpec.preset(
                cfg.scale,
                context=cfg.window(),
                acoustic_dim=acoustic_dim,
                residual=cfg.residual,
                seed=seed,
                loss=cfg.loss,
            )
        return AutoencoderSpec.preset(
            cfg.model,  # type: ignore[arg-type]
            cfg.scale,
            context=cfg.window(),
            acoustic_dim=acoustic_dim,
            average_overlaps=cfg.average_overlaps,
            seed=seed,
            loss=cfg.loss,
        )

    @property
    def training_regime(self) -> str:
        """supervised, transductive (test audio in training) or inductive; none for the baseline"""
        if self.cfg.model == "baseline":
            return "none"
        if self.cfg.model == "blstm":
            return "supervised"
        return "transductive" if self.cfg.transductive else "inductive"

    def _fit_weak(self, seed: int) -> tuple[WeaklySupervisedModel, TrainingLog]:
        cfg = self.cfg
        train = self.utterances(self.plan.train, TrackKind.VTV)
        if cfg.transductive:
            # test audio only; its articulatory tracks are never read here
            train = train + self.utterances(self.plan.test, TrackKind.VTV)
        valid = self.utterances(self.plan.validation, TrackKind.VTV)
        spec = self.weak_spec(seed, train[0].acoustic.shape[1])
        frames = WindowedFrames([u.acoustic for u in train], [u.priors for u in train], spec.context)
        valid_frames = WindowedFrames([u.acoustic for u in valid], [u.priors for u in valid], spec.context)
        model = build_weak_model(spec)
        logger.info(
            f"Training {cfg.label} with {self.table.provenance} priors on {len(frames)} frames "
            f"({self.training_regime}, seed {seed})"
        )
        log = train_weakly(
            model, frames, valid_frames, cfg.optimizer_config(), seed, cfg.epochs(), cfg.stopping_patience()
        )
        return model, log

    def predict(self, model: ArticModel, utterances: Sequence[AlignedUtterance]) -> list[np.ndarray]:
        if isinstance(model, BlstmModel):
            spec = model.spec
            inputs = [blstm_inputs(u, spec.inputs, spec.phone_inventory) for u in utterances]
            return model.predict(inputs, get_config().training.blstm_batch_utterances)
        n_vtv = len(VTV_NAMES)
        return [generate_afs(model, u.acoustic, u.priors)[:, :n_vtv] for u in utterances]  # type: ignore[arg-type]

    def _test_set(self) -> tuple[list[AlignedUtterance], list[np.ndarray]]:
        test = self.utterances(self.plan.test)
        missing = [u.utt_id for u in test if u.target is None]
        if missing:
            raise DataError(f"test utterance {missing[0]} has no {self.cfg.target} track to score against")
        return test, [u.target.frames for u in test]  # type: ignore[union-attr]

    def score(self, model: ArticModel | None = None) -> ScoreReport:
        """Scores on the test speakers; the baseline scores the priors themselves"""
        test, measured = self._test_set()
        speakers = [u.speaker for u in test]
        metadata = {
            "split_kind": self.plan.kind,
            "provenance": self.table.provenance,
            "training": self.training_regime,
        }
        if model is None:
            return score_baseline(
                [u.priors[:, : len(VTV_NAMES)] for u in test], measured, speakers, **metadata
            )
        weak_lf = self.cfg.model != "blstm" and self.table.provenance == "LF"
        return score_predictions(
            self.predict(model, test),
            measured,
            speakers,
            self.cfg.feature_names,
            include_rmse=not weak_lf,
            model=self.cfg.label,
            **metadata,
        )

    def run(self, plan: SplitPlan, seed: int) -> ScoreReport:
        """Protocol runner: fit on `plan` with `seed` and score"""
        if plan != self.plan:
            raise ConfigError("experiment is bound to another split")
        if self.cfg.model == "baseline":
            return self.score()
        model, _ = self.fit(seed)
        return self.score(model)

    def protocol(self) -> ScoreReport:
        seeds = [self.cfg.seeds[0]] if self.cfg.model == "baseline" else self.cfg.seeds
        return run_protocol(self.plan, self.run, seeds)


def save_run(experiment: Experiment, model: ArticModel, log: TrainingLog, out_dir: Path) -> None:
    """Checkpoint directory: model, experiment config, prior table and training log"""
    out_dir = Path(out_dir)
    model.save(out_dir)
    paths = {
        key: Path(value).resolve()
        for key in ("manifest", "prior_table", "split_plan")
        if (value := getattr(experiment.cfg, key))
    }
    save_experiment(experiment.cfg.model_copy(update=paths), out_dir / EXPERIMENT_FILE)
    write_prior_table(experiment.table, out_dir / PRIORS_FILE)
    (out_dir / LOG_FILE).write_text(log.model_dump_json(indent=2), encoding="utf-8")


def open_run(
    ckpt_dir: Path, manifest: Path | None = None, plan: SplitPlan | None = None
) -> tuple[Experiment, ArticModel]:
    """Rebuild the experiment of a saved checkpoint, optionally against another manifest or split"""
    ckpt_dir = Path(ckpt_dir)
    cfg = load_experiment(ckpt_dir / EXPERIMENT_FILE)
    if manifest is not None:
        cfg = cfg.model_copy(update={"manifest": Path(manifest)})
    model = ArticModel.load(ckpt_dir)
    model.require_trained()
    cache = open_cache(cfg)
    table = load_prior_table(ckpt_dir / PRIORS_FILE)
    return Experiment(cfg, cache, plan or resolve_plan(cfg, cache.manifest), table=table), model


def derive(base: ExperimentConfig, **update: object) -> ExperimentConfig:
    """Validated copy of `base` with fields replaced"""
    try:
        return ExperimentConfig.model_validate({**base.model_dump(), **update})
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {validation_message(e)}") from e
