"""
Tests for the artic command line: argument parsing, exit codes and a
synth → split → train → eval → plot-data run on a tiny corpus.
"""

from pathlib import Path

import numpy as np
import pytest
from pytest_mock import MockerFixture
from scipy.io import wavfile

from src.acoustic import frame_count, read_features
from src.articulatory import load_prior_table
from src.cli.experiment import (
    EXPERIMENT_FILE,
    LOG_FILE,
    PRIORS_FILE,
    CorpusCache,
    Experiment,
    ExperimentConfig,
    apply_overrides,
    load_experiment,
)
from src.cli.main import build_parser, main
from src.cli.tables import cross_gender_weak_table, supervised_table, weakly_supervised_table
from src.config import reload_config
from src.datasets import SplitPlan, SynthCorpus, load_manifest
from src.errors import ConfigError
from src.evaluation import ScoreReport, score_predictions
from src.models.base import PARAMS_FILE, SPEC_FILE


@pytest.fixture(scope="module")
def workspace(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Four speakers × three utterances, a 2/1/1 split and a one-epoch ResDNN checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    assert main(["synth", "--out", str(corpus), "--speakers", "4", "--utts", "3", "--phones", "6"]) == 0
    split = root / "split.toml"
    argv = ["split", "--manifest", str(corpus / "manifest.txt"), "--counts", "2,1,1", "--seed", "2"]
    assert main([*argv, "--out", str(split)]) == 0
    code = main(
        [
            "train",
            "--manifest", str(corpus / "manifest.txt"),
            "--prior-table", str(corpus / "lf_table.txt"),
            "--scale", "desk",
            "--set", 'model = "resdnn"',
            "--set", "max_epochs = 1",
            "--split", str(split),
            "--out", str(root / "ckpt"),
        ]  # fmt: skip
    )
    assert code == 0
    return root


@pytest.mark.unit
class TestParser:
    """Test argument parsing"""

    def test_help(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that --help lists the subcommands and exits cleanly"""
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for command in ("extract", "priors", "synth", "split", "train", "eval", "table2", "plot-data"):
            assert command in out

    def test_command_required(self) -> None:
        """Test that a bare invocation is a usage error"""
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    @pytest.mark.parametrize("counts", ["2,x,1", "2,1"])
    def test_bad_counts(self, counts: str) -> None:
        """Test that --counts needs three integers"""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["split", "--manifest", "m.txt", "--counts", counts, "--out", "s.toml"])

    def test_table_flags(self) -> None:
        """Test table-specific options"""
        args = build_parser().parse_args(["table2", "--out", "t.tsv", "--sf1", "S01", "--sf2", "S01,S03"])
        assert (args.sf1, args.sf2) == ("S01", "S01,S03")
        args = build_parser().parse_args(["table1", "--out", "t.tsv", "--s1", "S02"])
        assert args.s1 == "S02"

    def test_synth_flags(self) -> None:
        """Test --utts/--out and their long-form aliases"""
        args = build_parser().parse_args(["synth", "--utts", "5", "--out", "d"])
        assert (args.utterances, args.out) == (5, Path("d"))
        args = build_parser().parse_args(["synth", "--utterances", "4", "--out-dir", "e"])
        assert (args.utterances, args.out) == (4, Path("e"))

    def test_extract_help(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that extract documents both input forms and the rate option"""
        with pytest.raises(SystemExit):
            main(["extract", "--help"])
        out = capsys.readouterr().out
        for flag in ("--audio", "--manifest", "--out", "--rate"):
            assert flag in out

    def test_extract_flags(self) -> None:
        """Test rate parsing and the single-source rule"""
        parser = build_parser()
        assert parser.parse_args(["extract", "--audio", "a.wav", "--out", "a.afea", "--rate", "AUTO"]).rate == "auto"
        assert parser.parse_args(["extract", "--audio", "a.wav", "--out", "a.afea", "--rate", "22050"]).rate == 22050
        assert parser.parse_args(["extract", "--audio", "a.wav", "--out", "a.afea"]).rate is None
        for argv in (
            ["extract", "--audio", "a.wav", "--manifest", "m.txt", "--out", "x"],
            ["extract", "--out", "x"],
            ["extract", "--audio", "a.wav", "--out", "x", "--rate", "fast"],
            ["extract", "--audio", "a.wav", "--out", "x", "--rate", "4000"],
        ):
            with pytest.raises(SystemExit):
                parser.parse_args(argv)


@pytest.mark.unit
class TestOverrides:
    """Test --set parsing into experiment configs"""

    def test_toml_values(self) -> None:
        """Test that values parse as TOML with a raw-string fallback"""
        data = apply_overrides({}, ["max_epochs=3", "seeds=[4, 5]", "loss.lambda_x = 0.5", "model=ae1"])
        assert data == {"max_epochs": 3, "seeds": [4, 5], "loss": {"lambda_x": 0.5}, "model": "ae1"}

    def test_not_key_value(self) -> None:
        """Test that an override without '=' is a configuration error"""
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["max_epochs"])

    def test_weak_model_needs_table(self) -> None:
        """Test that weak models refuse to run without a prior table"""
        with pytest.raises(ConfigError, match="prior_table"):
            load_experiment(None, ['model = "ae2"'])

    def test_unknown_key(self) -> None:
        """Test that unknown experiment keys are rejected"""
        with pytest.raises(ConfigError):
            load_experiment(None, ['model = "blstm"', "learning_rte = 0.1"])

    def test_missing_config_file(self, tmp_path: Path) -> None:
        """Test that an unreadable experiment file is a configuration error"""
        with pytest.raises(ConfigError, match="cannot read"):
            load_experiment(tmp_path / "missing.toml")


@pytest.mark.unit
class TestExitCodes:
    """Test error-to-exit-code mapping"""

    def test_config_error(self) -> None:
        """Test that configuration errors exit with 1"""
        assert main(["train", "--set", 'model = "ae2"', "--out", "ckpt"]) == 1

    def test_baseline_training(self, tmp_path: Path) -> None:
        """Test that training the baseline is refused"""
        assert main(["train", "--set", 'model = "baseline"', "--prior-table", "x", "--out", str(tmp_path)]) == 1

    def test_missing_manifest(self, tmp_path: Path) -> None:
        """Test that an unreadable manifest exits with 2"""
        out = tmp_path / "split.toml"
        assert main(["split", "--manifest", str(tmp_path / "none.txt"), "--out", str(out)]) == 2
        assert not out.exists()

    def test_missing_split(self, tmp_path: Path) -> None:
        """Test that eval on a missing split plan exits with 2"""
        argv = ["eval", "--model", str(tmp_path), "--split", str(tmp_path / "split.toml")]
        assert main([*argv, "--out", str(tmp_path / "r.tsv")]) == 2


@pytest.mark.integration
class TestPipeline:
    """Test the end-to-end command flow on a tiny synthetic corpus"""

    def test_synth_and_split(self, workspace: Path) -> None:
        """Test the corpus layout and the saved plan"""
        manifest = load_manifest(workspace / "corpus" / "manifest.txt")
        assert len(manifest) == 12
        plan = SplitPlan.load(workspace / "split.toml")
        assert (len(plan.train), len(plan.validation), len(plan.test)) == (2, 1, 1)
        assert plan.seed == 2

    def test_checkpoint_directory(self, workspace: Path) -> None:
        """Test the files of a trained checkpoint"""
        ckpt = workspace / "ckpt"
        for name in (SPEC_FILE, PARAMS_FILE, EXPERIMENT_FILE, PRIORS_FILE, LOG_FILE):
            assert (ckpt / name).is_file()
        cfg = load_experiment(ckpt / EXPERIMENT_FILE)
        assert cfg.model == "resdnn"
        assert cfg.manifest is not None and cfg.manifest.is_absolute()

    def test_eval(self, workspace: Path) -> None:
        """Test that eval writes a commented score table"""
        out = workspace / "scores.tsv"
        argv = ["eval", "--model", str(workspace / "ckpt"), "--split", str(workspace / "split.toml")]
        assert main([*argv, "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert "# model: ResDNN" in lines
        assert "# provenance: LF" in lines
        assert "# training: transductive" in lines
        assert "feature\trmse\tr" in lines
        assert lines[-1].startswith("average\t")

    def test_plot_data(self, workspace: Path) -> None:
        """Test the exported trajectory columns"""
        out = workspace / "plot.tsv"
        argv = ["plot-data", "--model", str(workspace / "ckpt"), "--utt", "S01_002", "--features", "LA,TBCD"]
        assert main([*argv, "--out", str(out)]) == 0
        header = out.read_text(encoding="utf-8").splitlines()[0].split("\t")
        assert header == [
            "frame",
            "LA_measured",
            "LA_prior",
            "LA_reconstructed",
            "TBCD_measured",
            "TBCD_prior",
            "TBCD_reconstructed",
        ]

    def test_priors(self, workspace: Path) -> None:
        """Test a statistical table built from two speakers"""
        corpus = workspace / "corpus"
        out = workspace / "sf.txt"
        argv = ["priors", "--manifest", str(corpus / "manifest.txt"), "--seed-table", str(corpus / "lf_table.txt")]
        assert main([*argv, "--speakers", "S01,S02", "--provenance", "SF2", "--out", str(out)]) == 0
        text = out.read_text(encoding="utf-8")
        assert "sil" in text

    @pytest.mark.parametrize("speakers", ["all", "ALL"])
    def test_priors_all_speakers(self, workspace: Path, speakers: str) -> None:
        """Test that 'all' means every manifest speaker"""
        corpus = workspace / "corpus"
        argv = ["priors", "--manifest", str(corpus / "manifest.txt"), "--seed-table", str(corpus / "lf_table.txt")]
        everyone, explicit = workspace / f"sf_{speakers}.txt", workspace / "sf_listed.txt"
        assert main([*argv, "--speakers", speakers, "--out", str(everyone)]) == 0
        assert main([*argv, "--speakers", "S01,S02,S03,S04", "--out", str(explicit)]) == 0
        assert everyone.read_text(encoding="utf-8") == explicit.read_text(encoding="utf-8")


@pytest.mark.integration
class TestTables:
    """Test result-table grids with the training protocol mocked out"""

    @pytest.fixture
    def cache(self, small_corpus: SynthCorpus) -> CorpusCache:
        return CorpusCache(load_manifest(small_corpus.manifest), load_prior_table(small_corpus.lf_table))

    @pytest.fixture
    def base(self, small_corpus: SynthCorpus) -> ExperimentConfig:
        return ExperimentConfig(scale="desk", manifest=small_corpus.manifest, prior_table=small_corpus.lf_table)

    @pytest.fixture
    def report(self, rng: np.random.Generator) -> ScoreReport:
        meas = [rng.normal(size=(20, 6))]
        return score_predictions([meas[0] + rng.normal(size=(20, 6))], meas, ["S01"])

    def test_weakly_supervised_grid(
        self, base: ExperimentConfig, cache: CorpusCache, report: ScoreReport, mocker: MockerFixture
    ) -> None:
        """Test provenance rows by model columns"""
        protocol = mocker.patch.object(Experiment, "protocol", return_value=report)
        frame = weakly_supervised_table(base, cache, ["S01"], ["S01", "S02"])
        assert protocol.call_count == 16
        assert frame["features"].to_list() == ["LF", "SF", "SF1", "SF2"]
        assert frame.columns[1:3] == ["Baseline_rmse", "Baseline_r"]
        assert frame.columns[-2:] == ["AE2_rmse", "AE2_r"]

    def test_cross_gender_grid(
        self, base: ExperimentConfig, cache: CorpusCache, report: ScoreReport, mocker: MockerFixture
    ) -> None:
        """Test test-gender rows with single-speaker variants"""
        mocker.patch.object(Experiment, "protocol", return_value=report)
        frame = cross_gender_weak_table(base, cache)
        assert frame["test"].to_list() == ["male", "male (S1)", "female", "female (S1)"]
        assert frame.columns == ["test", "Baseline_rmse", "Baseline_r", "AE2_rmse", "AE2_r"]

    def test_single_speaker_must_train(self, base: ExperimentConfig, cache: CorpusCache) -> None:
        """Test that the S1 row needs a training speaker of the split"""
        with pytest.raises(ConfigError, match="not a training speaker"):
            supervised_table(base, cache, single_speaker="S99")


def _tone(path: Path, rate: int, seconds: float = 1.0) -> Path:
    t = np.arange(int(rate * seconds)) / rate
    wavfile.write(path, rate, (0.3 * 32767 * np.sin(2 * np.pi * 440 * t)).astype(np.int16))
    return path


@pytest.mark.integration
class TestExtract:
    """Test WAV → feature-file extraction"""

    def test_single_file(self, tmp_path: Path) -> None:
        """Test one second of 16 kHz audio → 98 × 39 frames"""
        out = tmp_path / "tone.afea"
        assert main(["extract", "--audio", str(_tone(tmp_path / "tone.wav", 16000)), "--out", str(out)]) == 0
        seq = read_features(out)
        assert seq.frames.shape == (98, 39)

    def test_rate_checked_against_config(self, tmp_path: Path) -> None:
        """Test that the configured rate is the default and 'auto' trusts the header"""
        wav = _tone(tmp_path / "tone.wav", 22050)
        out = tmp_path / "tone.afea"
        assert main(["extract", "--audio", str(wav), "--out", str(out)]) == 2
        assert not out.exists()
        assert main(["extract", "--audio", str(wav), "--out", str(out), "--rate", "16000"]) == 2
        assert main(["extract", "--audio", str(wav), "--out", str(out), "--rate", "22050"]) == 0
        assert main(["extract", "--audio", str(wav), "--out", str(out), "--rate", "auto"]) == 0
        assert read_features(out).n_frames == frame_count(22050, 551, 220)

    def test_rate_from_environment(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that ARTIC_SAMPLE_RATE changes the expected rate"""
        monkeypatch.setenv("ARTIC_SAMPLE_RATE", "22050")
        reload_config()
        wav = _tone(tmp_path / "tone.wav", 22050)
        assert main(["extract", "--audio", str(wav), "--out", str(tmp_path / "tone.afea")]) == 0

    def test_manifest(self, tmp_path: Path) -> None:
        """Test that WAV entries are converted and the new manifest points at feature files"""
        for utt in ("u1", "u2"):
            _tone(tmp_path / f"{utt}.wav", 16000)
            (tmp_path / f"{utt}.txt").write_text("0.0 1.0 sil\n", encoding="utf-8")
        (tmp_path / "manifest.txt").write_text(
            "S01 M u1 u1.wav u1.txt\nS01 M u2 u2.wav u2.txt\n", encoding="utf-8"
        )
        out_dir = tmp_path / "out"
        assert main(["extract", "--manifest", str(tmp_path / "manifest.txt"), "--out", str(out_dir)]) == 0
        manifest = load_manifest(out_dir / "manifest.txt")
        assert [e.audio.suffix for e in manifest.entries] == [".afea", ".afea"]
        assert read_features(manifest.entries[0].audio).frames.shape == (98, 39)
