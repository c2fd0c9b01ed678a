"""
Articulatory representations: pellet trajectories, vocal tract variables
derived from them by palate geometry, and phone-indexed prior tables
(expert LFs and statistically quantized SFs).
"""

from collections.abc import Sequence
from enum import IntEnum
from pathlib import Path
from typing import Literal

import numpy as np
import polars as pl
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.config import ArticulatoryConfig, get_config
from src.errors import DataError
from src.utils import read_frame_file, write_frame_file

PELLETS = ["UL", "LL", "T1", "T2", "T3", "T4", "MNI", "MNM"]
TONGUE_PELLETS = ["T1", "T2", "T3", "T4"]
PT_NAMES = [f"{p}_{axis}" for p in PELLETS for axis in ("x", "y")]
VTV_NAMES = ["LP", "LA", "TTCL", "TTCD", "TBCL", "TBCD"]
PRIOR_NAMES = [*VTV_NAMES, "VEL", "GLO", "consonant", "silence"]
PRIOR_DIM = len(PRIOR_NAMES)
TRACK_MAGIC = b"AART"

Provenance = Literal["LF", "SF", "SF1", "SF2"]


class TrackKind(IntEnum):
    PT = 0
    VTV = 1

    @property
    def dims(self) -> int:
        return 2 * len(PELLETS) if self is TrackKind.PT else len(VTV_NAMES)


class ArticulatorySequence(BaseModel):
    """N × D articulatory frames (16 pellet coordinates or 6 VTVs)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: np.ndarray
    kind: TrackKind
    frame_period_ms: float = 10.0
    speaker: str = ""
    flagged: np.ndarray | None = None

    def model_post_init(self, __context: object) -> None:
        if self.frames.ndim != 2 or self.frames.shape[1] != self.kind.dims:
            raise DataError(
                f"{self.kind.name} track needs {self.kind.dims} columns, got shape {self.frames.shape}"
            )

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    def pellet(self, name: str) -> np.ndarray:
        """(N, 2) x-y trajectory of one pellet"""
        k = PELLETS.index(name)
        return self.frames[:, 2 * k : 2 * k + 2]


class PalateModel(BaseModel):
    """y = a·x² + b·x + c over [x_min, x_max], plus the speaker's lip origin"""

    coefficients: tuple[float, float, float]
    x_min: float
    x_max: float
    residual: float = 0.0
    lip_origin: float = 0.0

    def evaluate(self, x: np.ndarray | float) -> np.ndarray:
        return np.polyval(self.coefficients, x)

    def arc_length(self, x: np.ndarray | float) -> np.ndarray:
        """Curve length from x_min to x"""
        a, b, _ = self.coefficients
        x = np.asarray(x, dtype=np.float64)
        if abs(a) < 1e-12:
            return np.sqrt(1.0 + b * b) * (x - self.x_min)

        def primitive(u: np.ndarray) -> np.ndarray:
            p = 2.0 * a * u + b
            return (p * np.sqrt(1.0 + p * p) + np.arcsinh(p)) / (4.0 * a)

        return primitive(x) - primitive(np.asarray(self.x_min))

    def closest_point(self, px: float, py: float) -> tuple[float, float]:
        """(x of the nearest curve point within the domain, distance to it)"""
        a, b, c = self.coefficients
        if abs(a) < 1e-12:
            candidates = [(px - b * (c - py)) / (1.0 + b * b)]
        else:
            roots = np.roots([2 * a * a, 3 * a * b, b * b + 2 * a * (c - py) + 1, b * (c - py) - px])
            candidates = [r.real for r in roots if abs(r.imag) < 1e-9]
        candidates = [x for x in candidates if self.x_min <= x <= self.x_max]
        candidates += [self.x_min, self.x_max]
        xs = np.array(candidates)
        distances = np.hypot(xs - px, self.evaluate(xs) - py)
        best = int(np.argmin(distances))
        return float(xs[best]), float(distances[best])


class PriorTable(BaseModel):
    """Phone label → 10 integer prior features"""

    entries: dict[str, tuple[int, ...]]
    provenance: Provenance = "LF"

    @field_validator("entries")
    @classmethod
    def _check_vectors(cls, entries: dict[str, tuple[int, ...]]) -> dict[str, tuple[int, ...]]:
        for phone, vector in entries.items():
            if len(vector) != PRIOR_DIM:
                raise ValueError(f"phone '{phone}' has {len(vector)} values, expected {PRIOR_DIM}")
            if vector[8] not in (0, 1) or vector[9] not in (0, 1):
                raise ValueError(f"phone '{phone}': consonant and silence flags must be 0 or 1")
        return entries

    @property
    def phones(self) -> list[str]:
        return sorted(self.entries)

    @property
    def silence_phones(self) -> list[str]:
        return [p for p in self.phones if self.entries[p][9] == 1]

    def vector(self, phone: str) -> np.ndarray:
        try:
            return np.array(self.entries[phone], dtype=np.float64)
        except KeyError:
            raise DataError(f"phone '{phone}' is not in the {self.provenance} prior table") from None

    def as_frame(self) -> pl.DataFrame:
        rows = [{"phone": p, **dict(zip(PRIOR_NAMES, self.entries[p], strict=True))} for p in self.phones]
        return pl.DataFrame(rows)


class PhoneSegment(BaseModel):
    start: float = Field(ge=0)
    end: float
    phone: str


def fit_palate(points: np.ndarray, bins: int | None = None) -> PalateModel:
    """
    Least-squares quadratic through the upper envelope of tongue points.

    The envelope keeps, per x bin, the point with the largest y.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if np.unique(points[:, 0]).size < 3:
        raise DataError("palate fit needs at least 3 distinct x values")
    bins = bins or get_config().articulatory.palate_bins

    x_min, x_max = float(points[:, 0].min()), float(points[:, 0].max())
    index = np.minimum(((points[:, 0] - x_min) / (x_max - x_min) * bins).astype(int), bins - 1)
    order = np.lexsort((-points[:, 1], index))
    first = np.unique(index[order], return_index=True)[1]
    envelope = points[order[first]]
    if np.unique(envelope[:, 0]).size < 3:
        envelope = points

    coefficients = np.polyfit(envelope[:, 0], envelope[:, 1], deg=2)
    residual = float(np.sqrt(np.mean((np.polyval(coefficients, envelope[:, 0]) - envelope[:, 1]) ** 2)))
    return PalateModel(
        coefficients=tuple(float(v) for v in coefficients),
        x_min=x_min,
        x_max=x_max,
        residual=residual,
    )


def fit_speaker_geometry(sequences: Sequence[ArticulatorySequence], bins: int | None = None) -> PalateModel:
    """Palate from all tongue pellets of one speaker, lip origin at the mean upper-lip x"""
    tracks = [s for s in sequences if s.kind is TrackKind.PT]
    if not tracks:
        raise DataError("speaker geometry needs at least one pellet track")
    tongue = np.vstack([s.pellet(p) for s in tracks for p in TONGUE_PELLETS])
    palate = fit_palate(tongue, bins)
    lip_origin = float(np.mean(np.concatenate([s.pellet("UL")[:, 0] for s in tracks])))
    logger.debug(f"Palate fit residual {palate.residual:.4f}, lip origin {lip_origin:.4f}")
    return palate.model_copy(update={"lip_origin": lip_origin})


def pellets_to_vtvs(
    seq: ArticulatorySequence, palate: PalateModel, cfg: ArticulatoryConfig | None = None
) -> ArticulatorySequence:
    """LP, LA, TTCL, TTCD, TBCL, TBCD per frame"""
    if seq.kind is not TrackKind.PT:
        raise DataError(f"expected a PT track, got {seq.kind.name}")
    cfg = cfg or get_config().articulatory

    upper, lower = seq.pellet("UL"), seq.pellet("LL")
    out = np.empty((seq.n_frames, len(VTV_NAMES)))
    out[:, 0] = upper[:, 0] - palate.lip_origin
    out[:, 1] = np.hypot(*(upper - lower).T)
    flagged = np.zeros(seq.n_frames, dtype=bool)
    for column, pellet in ((2, cfg.tongue_tip), (4, cfg.tongue_body)):
        xy = seq.pellet(pellet)
        flagged |= (xy[:, 0] < palate.x_min) | (xy[:, 0] > palate.x_max)
        for t, (px, py) in enumerate(xy):
            x_star, distance = palate.closest_point(px, py)
            out[t, column] = float(palate.arc_length(x_star))
            out[t, column + 1] = distance
    if flagged.any():
        logger.warning(f"{int(flagged.sum())} frames with tongue pellets outside the palate domain")
    return ArticulatorySequence(
        frames=out,
        kind=TrackKind.VTV,
        frame_period_ms=seq.frame_period_ms,
        speaker=seq.speaker,
        flagged=flagged,
    )


def resample_track(seq: ArticulatorySequence, n_frames: int, hop_ms: float = 10.0) -> ArticulatorySequence:
    """Linear interpolation onto the acoustic frame grid t·hop"""
    source = np.arange(seq.n_frames) * seq.frame_period_ms
    target = np.arange(n_frames) * hop_ms
    frames = np.column_stack([np.interp(target, source, column) for column in seq.frames.T])
    return seq.model_copy(update={"frames": frames, "frame_period_ms": hop_ms, "flagged": None})


def write_track(seq: ArticulatorySequence, path: Path) -> None:
    write_frame_file(path, TRACK_MAGIC, seq.frames, int(round(seq.frame_period_ms * 1000)), int(seq.kind))


def read_track(path: Path, speaker: str = "") -> ArticulatorySequence:
    frames, period_us, kind = read_frame_file(path, TRACK_MAGIC, with_kind=True)
    try:
        track_kind = TrackKind(kind)
    except ValueError:
        raise DataError(f"unknown track kind {kind}", path) from None
    return ArticulatorySequence(
        frames=frames, kind=track_kind, frame_period_ms=period_us / 1000.0, speaker=speaker
    )


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Nearest integer, ties away from zero; exact for values just below a half"""
    values = np.asarray(values, dtype=np.float64)
    whole = np.trunc(values)
    return np.where(np.abs(values - whole) >= 0.5, whole + np.sign(values), whole)


def compute_statistical_priors(
    utterances: Sequence[tuple[str, np.ndarray, Sequence[str]]],
    seed_table: PriorTable,
    provenance: Provenance = "SF",
    normalize: bool = True,
    phones: Sequence[str] | None = None,
) -> PriorTable:
    """
    Quantized per-phone means of z-normalized VTVs.

    Args:
        utterances: (speaker, N × 6 VTV frames, N phone labels) triples
        seed_table: expert table supplying VEL, GLO, consonant and silence
        provenance: label stored in the resulting table
        normalize: z-normalize each speaker's VTVs before averaging
        phones: inventory that must be covered (default: every phone of the seed table)
    """
    if not utterances:
        raise DataError("no utterances to compute statistical priors from")
    frames = []
    for speaker, vtvs, labels in utterances:
        if len(labels) != len(vtvs):
            raise DataError(f"speaker '{speaker}': {len(vtvs)} VTV frames but {len(labels)} labels")
        frame = pl.DataFrame(np.asarray(vtvs, dtype=np.float64), schema=VTV_NAMES, orient="row")
        frames.append(frame.with_columns(pl.lit(speaker).alias("speaker"), pl.Series("phone", list(labels))))
    data = pl.concat(frames)

    if normalize:
        floor = get_config().features.std_floor
        data = data.with_columns(
            [
                (pl.col(c) - pl.col(c).mean().over("speaker"))
                / pl.col(c).std(ddof=0).over("speaker").clip(lower_bound=floor)
                for c in VTV_NAMES
            ]
        )

    means = data.group_by("phone").agg([pl.col(c).mean() for c in VTV_NAMES]).sort("phone")
    unknown = sorted(set(means["phone"]) - set(seed_table.entries))
    if unknown:
        raise DataError(f"phones missing from the seed table: {', '.join(unknown)}")
    required = list(phones) if phones is not None else seed_table.phones
    missing = sorted(set(required) - set(means["phone"]))
    if missing:
        raise DataError(f"phones with zero frames: {', '.join(missing)}")

    entries: dict[str, tuple[int, ...]] = {}
    for row in means.iter_rows(named=True):
        vtv = round_half_away(np.array([row[c] for c in VTV_NAMES]))
        extra = seed_table.entries[row["phone"]][len(VTV_NAMES) :]
        entries[row["phone"]] = tuple(int(v) for v in vtv) + tuple(extra)
    logger.info(f"Built {provenance} table for {len(entries)} phones from {data.height} frames")
    return PriorTable(entries=entries, provenance=provenance)


def quantization_levels(table: PriorTable) -> tuple[dict[str, int], float]:
    """Distinct values per VTV feature and their average"""
    matrix = np.array([table.entries[p] for p in table.phones])
    levels = {name: int(np.unique(matrix[:, k]).size) for k, name in enumerate(VTV_NAMES)}
    return levels, float(np.mean(list(levels.values())))


def load_prior_table(path: Path) -> PriorTable:
    """
    Parse `<phone> <10 integers>` lines. `#` starts a comment;
    a `# provenance: <LF|SF|SF1|SF2>` line sets the provenance.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"cannot read prior table: {e}", path) from e

    provenance = "LF"
    entries: dict[str, tuple[int, ...]] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line.startswith("#"):
            key, _, value = line.lstrip("#").partition(":")
            if key.strip().lower() == "provenance":
                provenance = value.strip()
                if provenance not in ("LF", "SF", "SF1", "SF2"):
                    raise DataError(f"unknown provenance '{provenance}'", path, number)
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        phone, *fields = line.split()
        if len(fields) != PRIOR_DIM:
            raise DataError(f"phone '{phone}' has {len(fields)} values, expected {PRIOR_DIM}", path, number)
        if phone in entries:
            raise DataError(f"duplicate phone '{phone}'", path, number)
        try:
            vector = tuple(int(v) for v in fields)
        except ValueError:
            raise DataError(f"non-integer value for phone '{phone}'", path, number) from None
        if vector[8] not in (0, 1) or vector[9] not in (0, 1):
            raise DataError(f"phone '{phone}': consonant and silence flags must be 0 or 1", path, number)
        entries[phone] = vector

    if not any(v[9] == 1 for v in entries.values()):
        raise DataError("table has no silence phone", path)
    return PriorTable(entries=entries, provenance=provenance)  # type: ignore[arg-type]


def write_prior_table(table: PriorTable, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# provenance: {table.provenance}", "# phone " + " ".join(PRIOR_NAMES)]
    lines += [f"{p} " + " ".join(str(v) for v in table.entries[p]) for p in table.phones]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def frame_midpoints(n_frames: int, hop_ms: float, window_ms: float) -> np.ndarray:
    """Frame t covers [t·hop, t·hop + window); its midpoint in seconds"""
    return (np.arange(n_frames) * hop_ms + window_ms / 2.0) / 1000.0


def frame_labels(
    alignment: Sequence[PhoneSegment],
    n_frames: int,
    hop_ms: float | None = None,
    window_ms: float | None = None,
) -> list[str]:
    """Phone active at each frame midpoint; a midpoint on a boundary goes to the later phone"""
    cfg = get_config().features
    midpoints = frame_midpoints(n_frames, hop_ms or cfg.hop_ms, window_ms or cfg.window_ms)
    starts = np.array([s.start for s in alignment])
    ends = np.array([s.end for s in alignment])
    index = np.searchsorted(starts, midpoints, side="right") - 1
    covered = (index >= 0) & (midpoints < ends[np.maximum(index, 0)])
    if not covered.all():
        first = int(np.argmin(covered))
        raise DataError(f"frame {first} (t={midpoints[first]:.4f}s) is not covered by the alignment")
    return [alignment[i].phone for i in index]


def priors_for_utterance(
    alignment: Sequence[PhoneSegment],
    table: PriorTable,
    n_frames: int,
    hop_ms: float | None = None,
    window_ms: float | None = None,
) -> np.ndarray:
    """N × 10 prior sequence by the frame-midpoint rule"""
    labels = frame_labels(alignment, n_frames, hop_ms, window_ms)
    vectors = {phone: table.vector(phone) for phone in set(labels)}
    return np.vstack([vectors[p] for p in labels])
