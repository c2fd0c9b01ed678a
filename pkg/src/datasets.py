"""
Corpus ingestion: manifests, phone alignments, speaker splits, frame-aligned
utterances and a synthetic corpus with known articulatory ground truth.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Sequence
from pathlib import Path
from typing import Literal

import numpy as np
import toml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.ndimage import gaussian_filter1d

from src.acoustic import (
    AcousticSequence,
    SpeakerStats,
    append_deltas,
    extract_features,
    fit_speaker_stats,
    read_features,
    read_wav,
    write_features,
    z_normalize,
)
from src.articulatory import (
    VTV_NAMES,
    ArticulatorySequence,
    PalateModel,
    PhoneSegment,
    PriorTable,
    TrackKind,
    fit_speaker_geometry,
    frame_labels,
    load_prior_table,
    pellets_to_vtvs,
    read_track,
    resample_track,
    write_prior_table,
    write_track,
)
from src.config import FeatureConfig, get_config
from src.errors import ConfigError, DataError
from src.utils import DEFAULT_LF_TABLE, parallel_map

Gender = Literal["M", "F"]
SplitKind = Literal["matched", "mismatched-test-female", "mismatched-test-male"]
MATCHED_PROPORTIONS = (35, 7, 4)


class ManifestEntry(BaseModel):
    speaker: str
    gender: Gender
    utt_id: str
    audio: Path
    alignment: Path
    tracks: list[Path] = Field(default_factory=list)


class DatasetManifest(BaseModel):
    """Utterances ordered by (speaker id, utterance id)"""

    entries: list[ManifestEntry]
    excluded: list[str] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def speakers(self) -> dict[str, Gender]:
        return {e.speaker: e.gender for e in self.entries}

    def utterances(self, speakers: Sequence[str] | None = None) -> list[ManifestEntry]:
        wanted = set(speakers) if speakers is not None else None
        return [e for e in self.entries if wanted is None or e.speaker in wanted]

    def entry(self, utt_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.utt_id == utt_id:
                return e
        raise DataError(f"utterance '{utt_id}' is not in the manifest")


def load_manifest(path: Path, check_files: bool = True) -> DatasetManifest:
    """
    Parse `<speaker> <gender> <utt-id> <audio-or-feat> <align> [<track>...]` lines.

    Relative paths are resolved against the manifest directory; `#` starts a
    comment and `!exclude <utt-id>...` lines drop utterances.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"cannot read manifest: {e}", path) from e

    root = path.parent
    entries: dict[str, ManifestEntry] = {}
    genders: dict[str, str] = {}
    excluded: list[str] = []
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] == "!exclude":
            excluded += fields[1:]
            continue
        if len(fields) < 5:
            raise DataError(f"expected at least 5 fields, got {len(fields)}", path, number)
        speaker, gender, utt_id, audio, alignment, *tracks = fields
        if gender not in ("M", "F"):
            raise DataError(f"gender must be M or F, got '{gender}'", path, number)
        if genders.setdefault(speaker, gender) != gender:
            raise DataError(f"speaker '{speaker}' listed with two genders", path, number)
        if utt_id in entries:
            raise DataError(f"duplicate utterance id '{utt_id}'", path, number)
        files = [root / audio, root / alignment, *(root / t for t in tracks)]
        if check_files:
            for f in files:
                if not f.is_file():
                    raise DataError(f"missing file {f}", path, number)
        entries[utt_id] = ManifestEntry(
            speaker=speaker,
            gender=gender,  # type: ignore[arg-type]
            utt_id=utt_id,
            audio=files[0],
            alignment=files[1],
            tracks=files[2:],
        )

    for utt_id in excluded:
        if entries.pop(utt_id, None) is not None:
            logger.info(f"Excluding utterance {utt_id}")
    if not entries:
        raise DataError("manifest lists no speakers", path)
    ordered = sorted(entries.values(), key=lambda e: (e.speaker, e.utt_id))
    logger.info(f"Loaded manifest with {len(ordered)} utterances from {len(genders)} speakers")
    return DatasetManifest(entries=ordered, excluded=excluded)


def _relative(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return str(path)


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for e in manifest.entries:
        files = [e.audio, e.alignment, *e.tracks]
        lines.append(" ".join([e.speaker, e.gender, e.utt_id, *(_relative(f, path.parent) for f in files)]))
    if manifest.excluded:
        lines.append("!exclude " + " ".join(manifest.excluded))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_alignment(path: Path) -> list[PhoneSegment]:
    """`<start-s> <end-s> <phone>` lines, sorted and non-overlapping"""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"cannot read alignment: {e}", path) from e

    segments: list[PhoneSegment] = []
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise DataError(f"expected '<start> <end> <phone>', got {len(fields)} fields", path, number)
        try:
            segment = PhoneSegment(start=float(fields[0]), end=float(fields[1]), phone=fields[2])
        except (ValueError, ValidationError):
            raise DataError("bad segment times", path, number) from None
        if segment.end <= segment.start:
            raise DataError("segment ends before it starts", path, number)
        if segments and segment.start < segments[-1].end - 1e-9:
            raise DataError("segments overlap or are out of order", path, number)
        segments.append(segment)
    if not segments:
        raise DataError("empty alignment", path)
    return segments


def write_alignment(segments: Sequence[PhoneSegment], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{s.start:.4f} {s.end:.4f} {s.phone}\n" for s in segments), encoding="utf-8")


class SplitPlan(BaseModel):
    """Disjoint train/validation/test speaker sets"""

    kind: SplitKind
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int = 0

    def model_post_init(self, __context: object) -> None:
        sets = [set(self.train), set(self.validation), set(self.test)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ConfigError("split sets must be pairwise disjoint")

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            toml.dump(self.model_dump(), f)

    @classmethod
    def load(cls, path: Path) -> "SplitPlan":
        try:
            with open(path, "rb") as f:
                return cls.model_validate(tomllib.load(f))
        except (OSError, tomllib.TOMLDecodeError, ValidationError) as e:
            raise DataError(f"cannot read split plan: {e}", path) from e


def make_split(
    manifest: DatasetManifest,
    kind: SplitKind,
    seed: int,
    counts: tuple[int, int, int] | None = None,
    validation: int | None = None,
) -> SplitPlan:
    """
    Seeded speaker partition.

    matched: `counts` = (train, validation, test), default proportional to 35/7/4.
    mismatched: the test gender is held out entirely, the other gender is split
    into train and `validation` speakers (default 20%, at least one).
    """
    speakers = manifest.speakers
    rng = np.random.default_rng(seed)

    if kind == "matched":
        pool = sorted(speakers)
        if counts is None:
            total = sum(MATCHED_PROPORTIONS)
            n_test = max(1, round(len(pool) * MATCHED_PROPORTIONS[2] / total))
            n_valid = max(1, round(len(pool) * MATCHED_PROPORTIONS[1] / total))
            counts = (len(pool) - n_valid - n_test, n_valid, n_test)
        if counts[0] < 1 or min(counts) < 0:
            raise ConfigError(f"split counts must leave at least one training speaker: {counts}")
        if sum(counts) > len(pool):
            raise ConfigError(f"split needs {sum(counts)} speakers, manifest has {len(pool)}")
        order = [pool[i] for i in rng.permutation(len(pool))]
        n_train, n_valid, n_test = counts
        train = order[:n_train]
        valid = order[n_train : n_train + n_valid]
        test = order[n_train + n_valid : n_train + n_valid + n_test]
    else:
        test_gender = "F" if kind == "mismatched-test-female" else "M"
        test = sorted(s for s, g in speakers.items() if g == test_gender)
        pool = sorted(s for s, g in speakers.items() if g != test_gender)
        n_valid = validation if validation is not None else max(1, round(0.2 * len(pool)))
        if not test or len(pool) < n_valid + 1:
            raise ConfigError(
                f"{kind} needs test speakers and at least {n_valid + 1} speakers of the other gender"
            )
        order = [pool[i] for i in rng.permutation(len(pool))]
        valid, train = order[:n_valid], order[n_valid:]

    plan = SplitPlan(kind=kind, train=sorted(train), validation=sorted(valid), test=sorted(test), seed=seed)
    logger.info(f"{kind} split: {len(plan.train)}/{len(plan.validation)}/{len(plan.test)} speakers")
    return plan


class AlignedUtterance(BaseModel):
    """Frame-synchronous features of one utterance on the 10 ms grid"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    utt_id: str
    speaker: str
    gender: Gender
    acoustic: np.ndarray
    labels: list[str]
    priors: np.ndarray
    target: ArticulatorySequence | None = None

    @property
    def n_frames(self) -> int:
        return int(self.acoustic.shape[0])


class RawUtterance(BaseModel):
    """Unnormalized inputs of one manifest entry"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    acoustic: AcousticSequence
    alignment: list[PhoneSegment]
    tracks: dict[TrackKind, ArticulatorySequence]


def read_raw(entry: ManifestEntry, cfg: FeatureConfig | None = None) -> RawUtterance:
    cfg = cfg or get_config().features
    if entry.audio.suffix.lower() == ".wav":
        samples, rate = read_wav(entry.audio)
        acoustic = extract_features(samples, rate, entry.utt_id, cfg)
    else:
        acoustic = read_features(entry.audio)
    tracks: dict[TrackKind, ArticulatorySequence] = {}
    for path in entry.tracks:
        track = read_track(path, entry.speaker)
        if track.kind in tracks:
            raise DataError(f"utterance '{entry.utt_id}' has two {track.kind.name} tracks", path)
        tracks[track.kind] = track
    return RawUtterance(acoustic=acoustic, alignment=read_alignment(entry.alignment), tracks=tracks)


def covered_frames(alignment: Sequence[PhoneSegment], n_frames: int, cfg: FeatureConfig) -> int:
    """Frames kept after truncating an alignment shortfall within the slack"""
    end = alignment[-1].end
    midpoints = (np.arange(n_frames) * cfg.hop_ms + cfg.window_ms / 2.0) / 1000.0
    uncovered = int(np.sum(midpoints >= end))
    if uncovered * cfg.hop_ms > cfg.slack_ms:
        raise DataError(
            f"alignment ends at {end:.3f}s, {uncovered} frames short of the audio (slack {cfg.slack_ms} ms)"
        )
    if uncovered:
        logger.debug(f"Truncating {uncovered} trailing frames not covered by the alignment")
    return n_frames - uncovered


def target_track(
    raw: RawUtterance, kind: TrackKind, palate: PalateModel | None = None
) -> ArticulatorySequence | None:
    """The requested track, deriving VTVs from pellets when only a PT track exists"""
    if kind in raw.tracks:
        return raw.tracks[kind]
    if kind is TrackKind.VTV and TrackKind.PT in raw.tracks and palate is not None:
        return pellets_to_vtvs(raw.tracks[TrackKind.PT], palate)
    return None


def align_utterance(
    entry: ManifestEntry,
    table: PriorTable,
    stats: SpeakerStats,
    target: TrackKind | None = None,
    track_stats: SpeakerStats | None = None,
    palate: PalateModel | None = None,
    raw: RawUtterance | None = None,
    cfg: FeatureConfig | None = None,
) -> AlignedUtterance:
    """
    z-normalized acoustics, per-frame phone labels and priors, and the optional
    articulatory target resampled to the frame grid and z-normalized.
    """
    cfg = cfg or get_config().features
    raw = raw or read_raw(entry, cfg)
    n = covered_frames(raw.alignment, raw.acoustic.n_frames, cfg)
    labels = frame_labels(raw.alignment, n, cfg.hop_ms, cfg.window_ms)
    priors = np.vstack([table.vector(p) for p in labels])

    track = None
    if target is not None:
        source = target_track(raw, target, palate)
        if source is not None:
            track = resample_track(source, n, cfg.hop_ms)
            if track_stats is not None:
                track = track.model_copy(update={"frames": z_normalize(track.frames, track_stats)})
    return AlignedUtterance(
        utt_id=entry.utt_id,
        speaker=entry.speaker,
        gender=entry.gender,
        acoustic=z_normalize(raw.acoustic.frames[:n], stats),
        labels=labels,
        priors=priors,
        target=track,
    )


def load_corpus(
    manifest: DatasetManifest,
    speakers: Sequence[str],
    table: PriorTable,
    target: TrackKind | None = None,
    threads: int | None = None,
) -> list[AlignedUtterance]:
    """Align every utterance of `speakers` with per-speaker statistics"""
    cfg = get_config().features
    aligned: list[AlignedUtterance] = []
    for speaker in sorted(set(speakers)):
        entries = manifest.utterances([speaker])
        if not entries:
            raise DataError(f"speaker '{speaker}' has no utterances in the manifest")
        raws = parallel_map(lambda e: read_raw(e, cfg), entries, threads)
        stats = fit_speaker_stats([r.acoustic.frames for r in raws], speaker)

        palate = track_stats = None
        if target is not None:
            pt_tracks = [r.tracks[TrackKind.PT] for r in raws if TrackKind.PT in r.tracks]
            if target is TrackKind.VTV and pt_tracks and any(TrackKind.VTV not in r.tracks for r in raws):
                palate = fit_speaker_geometry(pt_tracks)
            tracks = [t for t in (target_track(r, target, palate) for r in raws) if t is not None]
            if tracks:
                track_stats = fit_speaker_stats([t.frames for t in tracks], speaker)

        aligned += parallel_map(
            lambda pair: align_utterance(
                pair[0], table, stats, target, track_stats, palate, raw=pair[1], cfg=cfg
            ),
            list(zip(entries, raws, strict=True)),
            threads,
        )
    logger.info(f"Aligned {len(aligned)} utterances from {len(set(speakers))} speakers")
    return aligned


SYNTH_PHONES = [
    "aa", "iy", "uw", "b", "d", "g", "s", "sh", "m", "n", "l", "r", "f", "v", "k", "t",
    "p", "z", "eh", "ow", "ae", "ih", "uh", "ah", "w", "y", "th", "dh", "ch", "jh", "ng",
    "hh", "zh", "er", "ao", "aw", "ay", "ey", "oy",
]  # fmt: skip


class SynthConfig(BaseModel):
    speakers: int = Field(default=6, ge=2)
    utterances: int = Field(default=40, ge=1)
    phones: int = Field(default=12, ge=3, le=len(SYNTH_PHONES) + 1)
    seed: int = 1
    noise: float = Field(default=0.3, ge=0)
    min_frames: int = Field(default=8, ge=1)
    max_frames: int = Field(default=20, ge=1)
    smoothing: float = Field(default=1.0, ge=0, description="Gaussian smoothing of targets, frames")
    wander: float = Field(default=3.0, gt=0, description="Smoothing of the coarticulation wander, frames")
    hidden: int = Field(default=32, ge=1, description="Width of the observation mixing layer")


class SynthCorpus(BaseModel):
    manifest: Path
    lf_table: Path
    targets: Path
    directory: Path


def _design_targets(phones: list[str], rng: np.random.Generator) -> np.ndarray:
    """Per VTV dimension, non-silence phones get a balanced share of −1, 0, +1; silence is 0"""
    targets = np.zeros((len(phones), len(VTV_NAMES)))
    for d in range(len(VTV_NAMES)):
        values = np.resize([-1.0, 0.0, 1.0], len(phones) - 1)
        rng.shuffle(values)
        targets[1:, d] = values
    return targets


def _unit_scale(smooth: np.ndarray, wander: np.ndarray) -> np.ndarray:
    """smooth − mean + β·wander with β chosen so every column has variance exactly 1"""
    s = smooth - smooth.mean(axis=0)
    out = np.empty_like(s)
    for d in range(s.shape[1]):
        a = np.var(wander[:, d])
        b = 2.0 * np.mean(s[:, d] * wander[:, d])
        c = np.var(s[:, d]) - 1.0
        beta = (-b + np.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
        out[:, d] = s[:, d] + beta * wander[:, d]
    return out


def synth_corpus(out_dir: Path, config: SynthConfig | None = None) -> SynthCorpus:
    """
    Write a corpus whose articulation is known exactly.

    Each utterance visits every phone once between leading and trailing
    silence. Articulation is the smoothed per-phone target trajectory plus a
    segment-demeaned wander, scaled per speaker to zero mean and unit variance;
    stored VTV and PT tracks apply per-speaker affine distortions. Acoustic
    frames are a fixed two-layer tanh mixing of the distorted VTVs plus noise,
    with deltas appended.
    """
    config = config or SynthConfig()
    if config.max_frames < config.min_frames:
        raise ConfigError("max_frames must be >= min_frames")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(config.seed)
    phones = ["sil", *SYNTH_PHONES[: config.phones - 1]]
    targets = _design_targets(phones, rng)
    n_vtv = len(VTV_NAMES)

    w1 = rng.normal(scale=1.0 / np.sqrt(n_vtv), size=(config.hidden, n_vtv))
    b1 = rng.normal(scale=0.1, size=config.hidden)
    w2 = rng.normal(scale=1.0 / np.sqrt(config.hidden), size=(13, config.hidden))
    b2 = rng.normal(scale=0.1, size=13)

    entries: list[ManifestEntry] = []
    for k in range(config.speakers):
        speaker = f"S{k + 1:02d}"
        gender: Gender = "M" if k % 2 == 0 else "F"
        scale = rng.uniform(0.5, 2.0, size=n_vtv)
        offset = rng.uniform(-1.0, 1.0, size=n_vtv)
        pellet_map = rng.normal(scale=0.5, size=(n_vtv, TrackKind.PT.dims))
        pellet_offset = rng.uniform(-2.0, 2.0, size=TrackKind.PT.dims)

        segments_per_utt, smooth, wander = [], [], []
        for _ in range(config.utterances):
            order = [0, *(1 + rng.permutation(len(phones) - 1)), 0]
            durations = rng.integers(config.min_frames, config.max_frames + 1, size=len(order))
            steps = np.repeat(targets[order], durations, axis=0)
            if config.smoothing:
                steps = gaussian_filter1d(steps, config.smoothing, axis=0, mode="nearest")
            smooth.append(steps)
            walk = gaussian_filter1d(rng.normal(size=steps.shape), config.wander, axis=0, mode="nearest")
            bounds = np.concatenate([[0], np.cumsum(durations)])
            for start, end in zip(bounds[:-1], bounds[1:], strict=True):
                walk[start:end] -= walk[start:end].mean(axis=0)
            wander.append(walk)
            segments_per_utt.append((order, bounds))

        lengths = [len(s) for s in smooth]
        latent = np.split(_unit_scale(np.vstack(smooth), np.vstack(wander)), np.cumsum(lengths)[:-1])

        for u, (z, (order, bounds)) in enumerate(zip(latent, segments_per_utt, strict=True)):
            utt_id = f"{speaker}_{u + 1:03d}"
            vtv = z * scale + offset
            pellets = z @ pellet_map + pellet_offset
            statics = np.tanh(vtv @ w1.T + b1) @ w2.T + b2
            if config.noise > 0:
                statics = statics + rng.normal(scale=config.noise, size=statics.shape)

            feat_path = out_dir / "features" / speaker / f"{utt_id}.afea"
            align_path = out_dir / "alignments" / speaker / f"{utt_id}.txt"
            vtv_path = out_dir / "tracks" / speaker / f"{utt_id}.vtv.aart"
            pt_path = out_dir / "tracks" / speaker / f"{utt_id}.pt.aart"
            write_features(AcousticSequence(frames=append_deltas(statics), utt_id=utt_id), feat_path)
            write_track(ArticulatorySequence(frames=vtv, kind=TrackKind.VTV, speaker=speaker), vtv_path)
            write_track(ArticulatorySequence(frames=pellets, kind=TrackKind.PT, speaker=speaker), pt_path)
            # Boundary between frames f-1 and f sits halfway between their midpoints.
            times = bounds * 0.01 + 0.0075
            times[0] = 0.0
            segments = [
                PhoneSegment(start=float(s), end=float(e), phone=phones[p])
                for s, e, p in zip(times[:-1], times[1:], order, strict=True)
            ]
            write_alignment(segments, align_path)
            entries.append(
                ManifestEntry(
                    speaker=speaker, gender=gender, utt_id=utt_id, audio=feat_path,
                    alignment=align_path, tracks=[vtv_path, pt_path],
                )  # fmt: skip
            )

    manifest_path = out_dir / "manifest.txt"
    write_manifest(DatasetManifest(entries=entries), manifest_path)

    default = load_prior_table(DEFAULT_LF_TABLE)
    designed: dict[str, tuple[int, ...]] = {}
    expert: dict[str, tuple[int, ...]] = {}
    for phone, target in zip(phones, targets, strict=True):
        extra = default.entries[phone][n_vtv:]
        designed[phone] = tuple(int(v) for v in target) + extra
        perturbed = 2 * target.astype(int)
        if phone != "sil":
            flips = rng.random(n_vtv) < 0.15
            perturbed = perturbed + flips * rng.choice([-1, 1], size=n_vtv)
        expert[phone] = tuple(int(v) for v in perturbed) + extra
    targets_path, lf_path = out_dir / "targets.txt", out_dir / "lf_table.txt"
    write_prior_table(PriorTable(entries=designed, provenance="SF"), targets_path)
    write_prior_table(PriorTable(entries=expert, provenance="LF"), lf_path)
    logger.info(
        f"Synthesized {len(entries)} utterances from {config.speakers} speakers "
        f"over {len(phones)} phones in {out_dir}"
    )
    return SynthCorpus(manifest=manifest_path, lf_table=lf_path, targets=targets_path, directory=out_dir)
