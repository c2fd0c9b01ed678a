"""
Result tables as tab-separated text.
"""

from collections.abc import Sequence
from pathlib import Path

import polars as pl
from loguru import logger

from src.config import get_config
from src.evaluation import ScoreReport


def render_table(df: pl.DataFrame, decimals: int | None = None) -> str:
    """TSV text with fixed float precision; nulls become empty cells"""
    decimals = decimals if decimals is not None else get_config().evaluation.table_decimals
    return df.write_csv(separator="\t", float_precision=decimals, null_value="")


def report_frame(report: ScoreReport) -> pl.DataFrame:
    """One row per feature plus a feature-average row"""
    headline = report.headline
    average = pl.DataFrame(
        {"feature": ["average"], "rmse": [report.mean_rmse], "r": [report.mean_r]},
        schema={"feature": pl.Utf8, "rmse": pl.Float64, "r": pl.Float64},
    )
    return pl.concat([headline.select("feature", "rmse", "r"), average])


def render_report(report: ScoreReport, decimals: int | None = None) -> str:
    lines = [
        f"# model: {report.model}",
        f"# split: {report.split_kind}",
        f"# provenance: {report.provenance}",
        f"# training: {report.training or 'n/a'}",
        f"# excluded_correlations: {report.excluded}",
    ]
    if report.seeds:
        lines.append(f"# seeds: {','.join(str(s) for s in report.seeds)}")
        lines.append(f"# r_std: {report.r_std:.{decimals or get_config().evaluation.table_decimals}f}")
    return "\n".join(lines) + "\n" + render_table(report_frame(report), decimals)


def speaker_frame(report: ScoreReport) -> pl.DataFrame:
    """An RMSE row and an r row per speaker, one column per feature"""
    metrics = ["rmse", "r"] if report.include_rmse else ["r"]
    long = report.per_speaker.unpivot(index=["speaker", "feature"], on=metrics, variable_name="metric")
    wide = long.pivot(on="feature", index=["speaker", "metric"], values="value", aggregate_function="first")
    order = {m: k for k, m in enumerate(metrics)}
    return (
        wide.select("speaker", "metric", *report.features)
        .with_columns(pl.col("metric").replace_strict(order, return_dtype=pl.Int64).alias("_order"))
        .sort("speaker", "_order")
        .drop("_order")
    )


def grid_frame(cells: Sequence[dict[str, object]], row_key: str, column_key: str) -> pl.DataFrame:
    """
    Table-shaped grid: one row per `row_key` value, `<column>_rmse` and
    `<column>_r` columns per `column_key` value, in first-seen order.
    """
    rows: dict[str, dict[str, object]] = {}
    columns: list[str] = []
    for cell in cells:
        row = rows.setdefault(str(cell[row_key]), {row_key: str(cell[row_key])})
        column = str(cell[column_key])
        if column not in columns:
            columns.append(column)
        row[f"{column}_rmse"] = cell.get("rmse")
        row[f"{column}_r"] = cell.get("r")
    names = [row_key] + [f"{c}_{m}" for c in columns for m in ("rmse", "r")]
    schema = {n: (pl.Utf8 if n == row_key else pl.Float64) for n in names}
    return pl.DataFrame([{n: r.get(n) for n in names} for r in rows.values()], schema=schema)


def write_tsv(text: str, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")
