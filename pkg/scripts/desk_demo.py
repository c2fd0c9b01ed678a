#!/usr/bin/env python3
"""
Desk-scale demo: synthesize a small corpus, score the SF baseline, train
ResDNN and AE2 on the matched split and compare correlations with the
ground-truth VTVs.
"""

import argparse
import sys
import tempfile
from pathlib import Path

# Add project root to path for imports
REPO_DIR = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_DIR))

from loguru import logger

from src.cli.experiment import Experiment, ExperimentConfig, open_cache, resolve_plan
from src.datasets import SynthConfig, synth_corpus
from src.errors import ArticError
from src.render import render_report


def run_demo(out_dir: Path, utterances: int, epochs: int) -> bool:
    corpus = synth_corpus(out_dir, SynthConfig(utterances=utterances))
    base = ExperimentConfig(
        model="baseline",
        scale="desk",
        manifest=corpus.manifest,
        prior_table=corpus.lf_table,
        provenance="SF",
        max_epochs=epochs,
    )
    cache = open_cache(base)
    plan = resolve_plan(base, cache.manifest)

    scores = {}
    for model in ("baseline", "resdnn", "ae2"):
        cfg = base.model_copy(update={"model": model})
        report = Experiment(cfg, cache, plan).protocol()
        scores[report.model] = report.mean_r
        print(render_report(report))

    for name, r in scores.items():
        logger.info(f"{name:<10} r = {r:.4f}")
    improved = scores["AE2"] > scores["Baseline"]
    logger.info("✓ AE2 improves on the baseline" if improved else "✗ AE2 does not beat the baseline")
    return improved


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, help="Keep the corpus here (default: a temporary directory)")
    parser.add_argument("--utterances", type=int, default=20, help="Utterances per speaker")
    parser.add_argument("--epochs", type=int, default=15, help="Epoch cap for every model")
    args = parser.parse_args()

    try:
        if args.out_dir:
            return 0 if run_demo(args.out_dir, args.utterances, args.epochs) else 1
        with tempfile.TemporaryDirectory() as tmp:
            return 0 if run_demo(Path(tmp), args.utterances, args.epochs) else 1
    except ArticError as e:
        logger.error(f"Demo failed: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
