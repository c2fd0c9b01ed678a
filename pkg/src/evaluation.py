"""
Scoring of reconstructed against measured articulatory features: per-feature
normalized RMSE and Pearson r, pooled per speaker then averaged over speakers.
"""

from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import polars as pl
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.acoustic import SpeakerStats, z_normalize
from src.articulatory import VTV_NAMES
from src.datasets import SplitPlan
from src.errors import ArticError, DataError


class UndefinedCorrelation(DataError):
    """Correlation of a constant series"""


def pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError(f"series lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise UndefinedCorrelation("correlation needs at least 2 frames")
    da, db = a - a.mean(), b - b.mean()
    denominator = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denominator == 0.0:
        raise UndefinedCorrelation("correlation of a constant series is undefined")
    return float(np.clip(np.sum(da * db) / denominator, -1.0, 1.0))


def normalized_rmse(pred: np.ndarray, meas: np.ndarray, stats: SpeakerStats | None = None) -> np.ndarray:
    """
    Per-feature RMSE of z-normalized trajectories. With `stats` both inputs are
    normalized first; otherwise they are taken as already normalized.
    """
    pred, meas = np.asarray(pred, dtype=np.float64), np.asarray(meas, dtype=np.float64)
    if pred.shape != meas.shape:
        raise DataError(f"prediction shape {pred.shape} does not match measurement {meas.shape}")
    if stats is not None:
        pred, meas = z_normalize(pred, stats), z_normalize(meas, stats)
    return np.sqrt(np.mean((pred - meas) ** 2, axis=0))


class ScoreReport(BaseModel):
    """
    Scores of one model on one test set.

    `per_speaker` holds (speaker, feature, frames, rmse, r) rows; `pooled`
    holds the same metrics over all frames at once. Undefined correlations are
    null and counted in `excluded`.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: str = ""
    split_kind: str = ""
    provenance: str = ""
    training: str = ""
    features: list[str]
    include_rmse: bool = True
    per_speaker: pl.DataFrame
    pooled: pl.DataFrame
    excluded: int = 0
    seeds: list[int] = Field(default_factory=list)
    r_std: float | None = None
    rmse_std: float | None = None

    @property
    def headline(self) -> pl.DataFrame:
        """Per-feature metrics averaged over speakers, in feature order"""
        order = pl.DataFrame({"feature": self.features}).with_row_index("position")
        means = self.per_speaker.group_by("feature").agg(pl.col("rmse").mean(), pl.col("r").mean())
        return order.join(means, on="feature", how="left").sort("position").drop("position")

    @property
    def mean_r(self) -> float:
        value = self.headline["r"].mean()
        return float("nan") if value is None else float(value)  # type: ignore[arg-type]

    @property
    def mean_rmse(self) -> float | None:
        if not self.include_rmse:
            return None
        value = self.headline["rmse"].mean()
        return None if value is None else float(value)  # type: ignore[arg-type]


def _feature_rows(
    pred: np.ndarray, meas: np.ndarray, features: Sequence[str], label: str
) -> tuple[list[dict], int]:
    rmse = normalized_rmse(pred, meas)
    rows, excluded = [], 0
    for k, name in enumerate(features):
        try:
            r: float | None = pearson_r(pred[:, k], meas[:, k])
        except UndefinedCorrelation:
            logger.warning(f"Undefined correlation for {name} of {label}, excluded from averages")
            r, excluded = None, excluded + 1
        rows.append({"feature": name, "frames": int(pred.shape[0]), "rmse": float(rmse[k]), "r": r})
    return rows, excluded


def score_predictions(
    pred: Sequence[np.ndarray],
    measured: Sequence[np.ndarray],
    speakers: Sequence[str],
    features: Sequence[str] = VTV_NAMES,
    include_rmse: bool = True,
    **metadata: str,
) -> ScoreReport:
    """Score per-utterance predictions; utterances are pooled per speaker"""
    if not (len(pred) == len(measured) == len(speakers)) or not pred:
        raise DataError("predictions, measurements and speakers must be non-empty and equally long")
    width = len(features)
    pred = [np.asarray(p, dtype=np.float64)[:, :width] for p in pred]
    measured = [np.asarray(m, dtype=np.float64)[:, :width] for m in measured]

    rows, excluded = [], 0
    for speaker in sorted(set(speakers)):
        chosen = [k for k, s in enumerate(speakers) if s == speaker]
        speaker_rows, n = _feature_rows(
            np.vstack([pred[k] for k in chosen]), np.vstack([measured[k] for k in chosen]), features, speaker
        )
        rows += [{"speaker": speaker, **row} for row in speaker_rows]
        excluded += n
    pooled_rows, _ = _feature_rows(np.vstack(pred), np.vstack(measured), features, "all speakers")

    schema = {"feature": pl.Utf8, "frames": pl.Int64, "rmse": pl.Float64, "r": pl.Float64}
    per_speaker = pl.DataFrame(rows, schema={"speaker": pl.Utf8, **schema})
    pooled = pl.DataFrame(pooled_rows, schema=schema)
    if not include_rmse:
        per_speaker = per_speaker.with_columns(pl.lit(None, dtype=pl.Float64).alias("rmse"))
        pooled = pooled.with_columns(pl.lit(None, dtype=pl.Float64).alias("rmse"))
    return ScoreReport(
        features=list(features),
        include_rmse=include_rmse,
        per_speaker=per_speaker,
        pooled=pooled,
        excluded=excluded,
        **metadata,
    )


def score_baseline(
    priors: Sequence[np.ndarray],
    measured: Sequence[np.ndarray],
    speakers: Sequence[str],
    provenance: str = "SF",
    **metadata: str,
) -> ScoreReport:
    """Prior vectors compared directly with measured VTVs; LF tables get no RMSE"""
    return score_predictions(
        priors,
        measured,
        speakers,
        VTV_NAMES,
        include_rmse=provenance != "LF",
        model="Baseline",
        provenance=provenance,
        **metadata,
    )


def combine_seeds(reports: Sequence[ScoreReport], seeds: Sequence[int]) -> ScoreReport:
    """Mean over seeds of every metric, with the std of the headline averages"""
    if not reports:
        raise DataError("no reports to combine")
    first = reports[0]
    keys = ["speaker", "feature", "frames"]
    per_speaker = (
        pl.concat([r.per_speaker for r in reports])
        .group_by(keys, maintain_order=True)
        .agg(pl.col("rmse").mean(), pl.col("r").mean())
    )
    pooled = (
        pl.concat([r.pooled for r in reports])
        .group_by(["feature", "frames"], maintain_order=True)
        .agg(pl.col("rmse").mean(), pl.col("r").mean())
    )
    rmses = [r.mean_rmse for r in reports if r.mean_rmse is not None]
    return first.model_copy(
        update={
            "per_speaker": per_speaker,
            "pooled": pooled,
            "excluded": sum(r.excluded for r in reports),
            "seeds": list(seeds),
            "r_std": float(np.std([r.mean_r for r in reports])),
            "rmse_std": float(np.std(rmses)) if rmses else None,
        }
    )


def run_protocol(
    plan: SplitPlan,
    runner: Callable[[SplitPlan, int], ScoreReport],
    seeds: Sequence[int] = (1, 2),
) -> ScoreReport:
    """
    Train on the train speakers, early-stop on the validation speakers and
    score the test speakers once per seed; report the seed mean and std.
    """
    reports = []
    for seed in seeds:
        try:
            reports.append(runner(plan, seed))
        except ArticError as e:
            logger.error(f"Protocol run failed ({plan.kind}, seed {seed}): {e}")
            raise
    combined = combine_seeds(reports, seeds)
    regime = f", {combined.training} training" if combined.training else ""
    logger.info(
        f"{combined.model} on {plan.kind}{regime}: r {combined.mean_r:.4f} ± {combined.r_std:.4f} "
        f"over seeds {list(seeds)}"
    )
    return combined


def emit_plot_data(
    measured: np.ndarray,
    prior: np.ndarray,
    reconstructed: np.ndarray,
    features: Sequence[str],
    out_path: Path,
    all_features: Sequence[str] = VTV_NAMES,
) -> pl.DataFrame:
    """Frame-indexed TSV with measured, prior and reconstructed columns per feature"""
    columns: dict[str, np.ndarray] = {"frame": np.arange(len(measured))}
    for name in features:
        if name not in all_features:
            raise DataError(f"unknown feature '{name}'")
        k = list(all_features).index(name)
        for label, series in (("measured", measured), ("prior", prior), ("reconstructed", reconstructed)):
            if len(series) != len(measured):
                raise DataError(f"{label} series has {len(series)} frames, expected {len(measured)}")
            columns[f"{name}_{label}"] = np.asarray(series, dtype=np.float64)[:, k]
    frame = pl.DataFrame(columns)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(out_path, separator="\t")
    return frame
