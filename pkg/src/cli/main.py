#!/usr/bin/env python3
"""
artic: command-line entry point.

Run with --help to see the available subcommands. Logs go to stderr,
results go to the files named by --out / --out-dir.
"""

import argparse
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

from loguru import logger
from pydantic import ValidationError

from src.acoustic import MIN_SAMPLE_RATE, extract_features, read_wav, write_features
from src.articulatory import (
    TrackKind,
    compute_statistical_priors,
    load_prior_table,
    quantization_levels,
    write_prior_table,
)
from src.cli.experiment import (
    CorpusCache,
    Experiment,
    ExperimentConfig,
    load_experiment,
    open_cache,
    open_run,
    resolve_plan,
    save_run,
    validation_message,
)
from src.cli.tables import (
    cross_gender_supervised_table,
    cross_gender_weak_table,
    speaker_table,
    supervised_table,
    weakly_supervised_table,
)
from src.config import get_config
from src.datasets import (
    DatasetManifest,
    ManifestEntry,
    SplitPlan,
    SynthConfig,
    load_corpus,
    load_manifest,
    make_split,
    synth_corpus,
    write_manifest,
)
from src.errors import ArticError, ConfigError, DataError
from src.evaluation import emit_plot_data
from src.render import render_report, render_table, write_tsv
from src.utils import DEFAULT_LF_TABLE, parallel_map

SPLIT_KINDS = ["matched", "mismatched-test-female", "mismatched-test-male"]


def _csv(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _counts(text: str) -> tuple[int, int, int]:
    try:
        values = tuple(int(v) for v in _csv(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three integers, got '{text}'") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected train,validation,test counts, got '{text}'")
    return values  # type: ignore[return-value]


def _rate(text: str) -> str | int:
    if text.lower() == "auto":
        return "auto"
    try:
        rate = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a rate in Hz, got '{text}'") from None
    if rate < MIN_SAMPLE_RATE:
        raise argparse.ArgumentTypeError(f"sample rate must be at least {MIN_SAMPLE_RATE} Hz")
    return rate


def _speakers(text: str | None, manifest: DatasetManifest) -> list[str]:
    if not text or text.strip().lower() == "all":
        return sorted(manifest.speakers)
    return _csv(text)


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.set or [])
    if getattr(args, "manifest", None) is not None:
        overrides.append(f'manifest = "{Path(args.manifest).resolve().as_posix()}"')
    if getattr(args, "prior_table", None) is not None:
        overrides.append(f'prior_table = "{Path(args.prior_table).resolve().as_posix()}"')
    if getattr(args, "scale", None) is not None:
        overrides.append(f'scale = "{args.scale}"')
    return load_experiment(args.config, overrides)


def cmd_extract(args: argparse.Namespace) -> int:
    """WAV → AFEA features for one file (--audio) or for every WAV entry of a manifest"""
    cfg = get_config().features
    expected_rate = None if args.rate == "auto" else (args.rate or cfg.sample_rate)

    def extract(audio: Path, utt_id: str, out: Path) -> None:
        samples, rate = read_wav(audio, expected_rate)
        write_features(extract_features(samples, rate, utt_id, cfg), out)

    if args.audio is not None:
        extract(args.audio, args.audio.stem, Path(args.out))
        logger.info(f"Wrote features of {args.audio} to {args.out}")
        return 0

    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)

    def extract_entry(entry: ManifestEntry) -> ManifestEntry:
        if entry.audio.suffix.lower() != ".wav":
            return entry
        path = out_dir / "features" / entry.speaker / f"{entry.utt_id}.afea"
        extract(entry.audio, entry.utt_id, path)
        return entry.model_copy(update={"audio": path})

    entries = parallel_map(extract_entry, manifest.entries, get_config().app.threads)
    write_manifest(DatasetManifest(entries=entries, excluded=manifest.excluded), out_dir / "manifest.txt")
    logger.info(f"Extracted features for {len(entries)} utterances into {out_dir}")
    return 0


def cmd_priors(args: argparse.Namespace) -> int:
    """Statistical prior table from the VTV tracks of some speakers"""
    seed_table = load_prior_table(args.seed_table)
    manifest = load_manifest(args.manifest)
    speakers = _speakers(args.speakers, manifest)
    utterances = load_corpus(manifest, speakers, seed_table, TrackKind.VTV, get_config().app.threads)
    missing = [u.utt_id for u in utterances if u.target is None]
    if missing:
        raise DataError(f"statistical priors need VTV or PT tracks; {missing[0]} has none")
    table = compute_statistical_priors(
        [(u.speaker, u.target.frames, u.labels) for u in utterances],  # type: ignore[union-attr]
        seed_table,
        args.provenance,
        normalize=not args.no_normalize,
        phones=sorted({p for u in utterances for p in u.labels}),
    )
    write_prior_table(table, Path(args.out))
    levels, average = quantization_levels(table)
    logger.info(f"Quantization levels {levels} (average {average:.2f})")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        speakers=args.speakers,
        utterances=args.utterances,
        phones=args.phones,
        seed=args.seed,
        noise=args.noise,
    )
    corpus = synth_corpus(Path(args.out), config)
    logger.info(f"Manifest {corpus.manifest}, LF table {corpus.lf_table}, designed targets {corpus.targets}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest, check_files=False)
    plan = make_split(manifest, args.kind, args.seed, args.counts, args.validation)
    plan.save(Path(args.out))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _experiment(args)
    if cfg.model == "baseline":
        raise ConfigError("the baseline has nothing to train; use table2 or eval")
    cache = open_cache(cfg)
    plan = SplitPlan.load(Path(args.split)) if args.split else resolve_plan(cfg, cache.manifest)
    experiment = Experiment(cfg, cache, plan)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    model, log = experiment.fit(seed)
    save_run(experiment, model, log, Path(args.out))
    logger.info(f"Final training loss {log.final_loss:.6f}, stop reason {log.stop_reason}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    plan = SplitPlan.load(Path(args.split))
    experiment, model = open_run(Path(args.model), args.manifest, plan)
    report = experiment.score(model)
    write_tsv(render_report(report), Path(args.out))
    return 0


def cmd_plot_data(args: argparse.Namespace) -> int:
    features = _csv(args.features) if args.features else get_config().evaluation.plot_features
    experiment, model = open_run(Path(args.model), args.manifest)
    if experiment.cfg.target != "vtv":
        raise ConfigError("plot-data exports VTV trajectories; the checkpoint predicts pellets")
    entry = experiment.cache.manifest.entry(args.utt)
    utterances = experiment.utterances([entry.speaker], TrackKind.VTV)
    utt = next(u for u in utterances if u.utt_id == args.utt)
    if utt.target is None:
        raise ConfigError(f"utterance '{args.utt}' has no articulatory track to plot")
    reconstructed = experiment.predict(model, [utt])[0]
    emit_plot_data(utt.target.frames, utt.priors, reconstructed, features, Path(args.out))
    logger.info(f"Wrote {utt.n_frames} frames of {', '.join(features)} to {args.out}")
    return 0


def _table_command(
    build: Callable[[ExperimentConfig, CorpusCache, argparse.Namespace], object],
) -> Callable[[argparse.Namespace], int]:
    def run(args: argparse.Namespace) -> int:
        cfg = _experiment(args)
        frame = build(cfg, open_cache(cfg), args)
        write_tsv(render_table(frame), Path(args.out))  # type: ignore[arg-type]
        return 0

    return run


def _default_prior_table(args: argparse.Namespace) -> None:
    if args.prior_table is None and args.config is None:
        args.prior_table = str(DEFAULT_LF_TABLE)


def _add_experiment_flags(parser: argparse.ArgumentParser, manifest_required: bool = False) -> None:
    parser.add_argument("--config", type=Path, help="Experiment TOML file")
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="Override an experiment key (repeatable)"
    )
    parser.add_argument("--manifest", type=Path, required=manifest_required, help="Dataset manifest")
    parser.add_argument("--prior-table", help="Expert (LF) prior table")
    parser.add_argument("--scale", choices=["full", "desk"], help="Architecture and optimizer presets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artic", description="Acoustic-to-articulatory inversion toolkit")
    parser.add_argument("--log-level", help="Override the configured log level")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = commands.add_parser("extract", help="Compute 39-dim MFCC features from one WAV or a manifest's WAVs")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--audio", type=Path, help="One 16-bit mono WAV file")
    source.add_argument("--manifest", type=Path, help="Manifest whose WAV entries are converted")
    p.add_argument(
        "--out", "--out-dir", dest="out", type=Path, required=True,
        help="Feature file (--audio) or output directory (--manifest)",
    )  # fmt: skip
    p.add_argument(
        "--rate", type=_rate, help="Expected rate in Hz, or 'auto' for the WAV header (default: configured rate)"
    )
    p.set_defaults(func=cmd_extract)

    p = commands.add_parser("priors", help="Build a statistical (SF) prior table from articulatory tracks")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument(
        "--seed-table", type=Path, default=DEFAULT_LF_TABLE, help="Supplies VEL/GLO/consonant/silence"
    )
    p.add_argument("--speakers", help="'all' or comma-separated source speakers (default: all)")
    p.add_argument("--provenance", choices=["SF", "SF1", "SF2"], default="SF")
    p.add_argument("--no-normalize", action="store_true", help="Average raw instead of z-normalized VTVs")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_priors)

    p = commands.add_parser("synth", help="Write a synthetic corpus with known articulatory ground truth")
    defaults = SynthConfig()
    p.add_argument("--out", "--out-dir", dest="out", type=Path, required=True, help="Corpus directory")
    p.add_argument("--speakers", type=int, default=defaults.speakers)
    p.add_argument(
        "--utts", "--utterances", dest="utterances", type=int, default=defaults.utterances,
        help="Utterances per speaker",
    )  # fmt: skip
    p.add_argument(
        "--phones", type=int, default=defaults.phones, help="Phone inventory size, silence included"
    )
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--noise", type=float, default=defaults.noise, help="Acoustic noise std")
    p.set_defaults(func=cmd_synth)

    p = commands.add_parser("split", help="Write a train/validation/test speaker split")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--kind", choices=SPLIT_KINDS, default="matched")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", type=_counts, help="train,validation,test speaker counts (matched)")
    p.add_argument("--validation", type=int, help="Validation speakers (mismatched)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_split)

    p = commands.add_parser("train", help="Train one model and write a checkpoint directory")
    _add_experiment_flags(p)
    p.add_argument("--split", type=Path, help="Split plan TOML (default: derived from the config)")
    p.add_argument("--seed", type=int, help="Initialization seed (default: first configured seed)")
    p.add_argument("--out", type=Path, required=True, help="Checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("eval", help="Score a checkpoint on the test speakers of a split")
    p.add_argument("--model", type=Path, required=True, help="Checkpoint directory")
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--manifest", type=Path, help="Manifest to score (default: the training manifest)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    tables: list[tuple[str, str, Callable[[ExperimentConfig, CorpusCache, argparse.Namespace], object]]] = [
        ("table1", "BLSTM inputs × {PT, VTV}", lambda c, k, a: supervised_table(c, k, a.s1)),
        (
            "table2",
            "Baseline/ResDNN/AE1/AE2 × {LF, SF, SF1, SF2}",
            lambda c, k, a: weakly_supervised_table(c, k, _csv(a.sf1 or ""), _csv(a.sf2 or "")),
        ),
        ("table3", "Per-speaker, per-VTV scores of one model", lambda c, k, a: speaker_table(c, k)),
        (
            "table4",
            "BLSTM cross-gender VTV reconstruction",
            lambda c, k, a: cross_gender_supervised_table(c, k),
        ),
        (
            "table5",
            "Baseline and AE2 with opposite-gender SFs",
            lambda c, k, a: cross_gender_weak_table(c, k),
        ),
    ]
    for name, description, build in tables:
        p = commands.add_parser(name, help=description)
        _add_experiment_flags(p)
        p.add_argument("--out", type=Path, required=True)
        if name == "table1":
            p.add_argument("--s1", help="Add a row trained on this single speaker")
        if name == "table2":
            p.add_argument("--sf1", help="SF1 source speaker (default: first training speaker)")
            p.add_argument("--sf2", help="Comma-separated SF2 source speakers (default: first two)")
        p.set_defaults(func=_table_command(build), needs_table=True)

    p = commands.add_parser(
        "plot-data", help="Measured, prior and reconstructed trajectories of one utterance"
    )
    p.add_argument("--model", type=Path, required=True, help="Checkpoint directory")
    p.add_argument(
        "--manifest", type=Path, help="Manifest holding the utterance (default: the training manifest)"
    )
    p.add_argument("--utt", required=True, help="Utterance id")
    p.add_argument("--features", help="Comma-separated VTV names (default: configured plot features)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = get_config()
    if args.log_level:
        logger.remove()
        logger.add(
            sys.stderr, level=args.log_level.upper(), format="{time:HH:mm:ss} | {level: <8} | {message}"
        )
    if getattr(args, "needs_table", False):
        _default_prior_table(args)
    logger.debug(f"artic {args.command} with {config.app.threads} threads")

    try:
        return args.func(args)
    except ArticError as e:
        logger.error(str(e).splitlines()[0])
        return e.exit_code
    except ValidationError as e:
        logger.error(f"invalid configuration: {validation_message(e)}")
        return ConfigError.exit_code
    except OSError as e:
        logger.error(f"{e.filename or 'I/O'}: {e.strerror or e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
