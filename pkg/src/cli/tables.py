"""
Result-table workflows. Every cell is validated up front, then each runs the
full seeded protocol; builders return a polars frame ready for `render_table`.
"""

from collections.abc import Sequence

import polars as pl
from loguru import logger

from src.cli.experiment import CorpusCache, Experiment, ExperimentConfig, derive, resolve_plan
from src.datasets import SplitKind, SplitPlan, make_split
from src.errors import ConfigError
from src.render import grid_frame, speaker_frame

BLSTM_INPUTS = ["mfcc", "phones", "lf", "sf", "mfcc+phones", "mfcc+lf", "mfcc+sf"]
CROSS_GENDER_INPUTS = ["mfcc", "sf", "mfcc+sf"]
WEAK_MODELS = ["baseline", "resdnn", "ae1", "ae2"]
TEST_GENDERS: dict[str, SplitKind] = {"male": "mismatched-test-male", "female": "mismatched-test-female"}

Cell = tuple[dict[str, str], ExperimentConfig, SplitPlan]


def _collect(cells: Sequence[Cell], cache: CorpusCache, row_key: str, column_key: str) -> pl.DataFrame:
    results = []
    for keys, cfg, plan in cells:
        logger.info(f"Cell {keys[row_key]} / {keys[column_key]}")
        report = Experiment(cfg, cache, plan).protocol()
        results.append({**keys, "rmse": report.mean_rmse, "r": report.mean_r})
    return grid_frame(results, row_key=row_key, column_key=column_key)


def supervised_table(
    base: ExperimentConfig, cache: CorpusCache, single_speaker: str | None = None
) -> pl.DataFrame:
    """BLSTM inputs × {PT, VTV}, optionally led by a single-speaker acoustic row"""
    plan = resolve_plan(base, cache.manifest)
    rows: list[tuple[str, str, str | None]] = [(name, name, None) for name in BLSTM_INPUTS]
    if single_speaker is not None:
        if single_speaker not in plan.train:
            raise ConfigError(f"single speaker '{single_speaker}' is not a training speaker of the split")
        rows.insert(0, ("mfcc (S1)", "mfcc", single_speaker))
    cells: list[Cell] = [
        (
            {"input": label, "target": target.upper()},
            derive(base, model="blstm", inputs=inputs, target=target, single_speaker=speaker),
            plan,
        )
        for label, inputs, speaker in rows
        for target in ("pt", "vtv")
    ]
    return _collect(cells, cache, "input", "target")


def weakly_supervised_table(
    base: ExperimentConfig,
    cache: CorpusCache,
    sf1_speakers: Sequence[str] = (),
    sf2_speakers: Sequence[str] = (),
) -> pl.DataFrame:
    """
    Prior provenance × {Baseline, ResDNN, AE1, AE2}; LF rows carry no RMSE.
    SF1/SF2 default to the first one/two training speakers.
    """
    plan = resolve_plan(base, cache.manifest)
    sources = {"LF": [], "SF": [], "SF1": list(sf1_speakers), "SF2": list(sf2_speakers)}
    cells: list[Cell] = []
    for provenance, speakers in sources.items():
        for model in WEAK_MODELS:
            cfg = derive(
                base,
                model=model,
                target="vtv",
                provenance=provenance,
                prior_speakers=speakers,
                single_speaker=None,
            )
            cells.append(({"features": provenance, "model": cfg.label}, cfg, plan))
    return _collect(cells, cache, "features", "model")


def speaker_table(base: ExperimentConfig, cache: CorpusCache) -> pl.DataFrame:
    """Per-speaker, per-feature breakdown of one model on the test speakers"""
    return speaker_frame(Experiment(base, cache, resolve_plan(base, cache.manifest)).protocol())


def cross_gender_supervised_table(base: ExperimentConfig, cache: CorpusCache) -> pl.DataFrame:
    """BLSTM VTV reconstruction with all test speakers of one gender"""
    cells: list[Cell] = []
    for gender, kind in TEST_GENDERS.items():
        plan = make_split(cache.manifest, kind, base.split_seed)
        for inputs in CROSS_GENDER_INPUTS:
            cfg = derive(base, model="blstm", inputs=inputs, target="vtv", split=kind, single_speaker=None)
            cells.append(({"input": inputs, "test": gender}, cfg, plan))
    return _collect(cells, cache, "input", "test")


def cross_gender_weak_table(base: ExperimentConfig, cache: CorpusCache) -> pl.DataFrame:
    """
    Baseline and AE2 with SFs from the opposite gender: all of its training
    speakers, then a single one (the first training speaker of the split).
    """
    cells: list[Cell] = []
    for gender, kind in TEST_GENDERS.items():
        plan = make_split(cache.manifest, kind, base.split_seed)
        variants = [(gender, "SF", []), (f"{gender} (S1)", "SF1", plan.train[:1])]
        for label, provenance, speakers in variants:
            for model in ("baseline", "ae2"):
                cfg = derive(
                    base,
                    model=model,
                    target="vtv",
                    split=kind,
                    provenance=provenance,
                    prior_speakers=speakers,
                    single_speaker=None,
                )
                cells.append(({"test": label, "model": cfg.label}, cfg, plan))
    return _collect(cells, cache, "test", "model")
