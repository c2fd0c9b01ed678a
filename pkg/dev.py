#!/usr/bin/env python3
"""
Developer commands for artic_inversion.

Tests are selected by marker (unit, integration, slow). The data commands
write a desk-scale synthetic corpus under data/ and result tables under runs/.
Run `python dev.py help` for the list.
"""

import argparse
import subprocess
import sys
from pathlib import Path

SYNTH_DIR = "data/synth"
RUNS_DIR = "runs"

TEST_SELECTIONS = {
    "test": ('-m "not slow"', "Running unit and integration tests"),
    "test-unit": ("-m unit", "Running unit tests"),
    "test-integration": ("-m integration", "Running integration tests"),
    "test-slow": ("-m slow", "Running desk-scale model checks"),
}


class DevScript:
    """Shell commands run from the repository root."""

    def __init__(self):
        self.root = Path(__file__).parent

    def sh(self, command: str, title: str = "") -> int:
        if title:
            print(f">>> {title}")
        print(f"$ {command}")
        try:
            return subprocess.run(command, shell=True, cwd=self.root).returncode
        except KeyboardInterrupt:
            print("\nInterrupted")
            return 130

    def sh_all(self, steps: list[tuple[str, str]], stop_on_failure: bool = False) -> int:
        failed = 0
        for command, title in steps:
            if self.sh(command, title) != 0:
                failed = 1
                if stop_on_failure:
                    break
        return failed

    def pytest(self, selection: str) -> int:
        marker, title = TEST_SELECTIONS[selection]
        return self.sh(f"uv run pytest {marker} --no-header -v", title)

    def setup_dev(self) -> int:
        return self.sh("uv sync --no-progress", "Installing dependencies")

    def coverage(self) -> int:
        return self.sh('uv run pytest -m "not slow" --cov=src --cov-report=term-missing', "Measuring coverage")

    def lint(self) -> int:
        return self.sh_all(
            [
                ("uv run ruff check .", "ruff"),
                ("uv run black --check .", "black"),
                ("uv run isort --check-only .", "isort"),
            ]
        )

    def format(self) -> int:
        return self.sh_all(
            [
                ("uv run black .", "black"),
                ("uv run isort .", "isort"),
                ("uv run ruff check --fix .", "ruff --fix"),
            ],
            stop_on_failure=True,
        )

    def type_check(self) -> int:
        return self.sh("uv run mypy src tests", "mypy")

    def check(self) -> int:
        """Lint, type-check and the fast test suite; what CI runs."""
        return self.lint() or self.type_check() or self.pytest("test")

    def synth(self) -> int:
        return self.sh(f"uv run artic synth --out {SYNTH_DIR}", f"Synthesizing a desk corpus in {SYNTH_DIR}")

    def tables(self) -> int:
        """Desk-scale weakly supervised tables on the synthetic corpus."""
        flags = f"--scale desk --manifest {SYNTH_DIR}/manifest.txt --prior-table {SYNTH_DIR}/lf_table.txt"
        return self.sh_all(
            [
                (f"uv run artic table2 {flags} --out {RUNS_DIR}/table2.tsv", "Table 2"),
                (f"uv run artic table5 {flags} --out {RUNS_DIR}/table5.tsv", "Table 5"),
            ],
            stop_on_failure=True,
        )

    def demo(self) -> int:
        return self.sh("uv run python scripts/desk_demo.py", "Desk-scale demo")

    def help(self) -> int:
        descriptions = {
            "setup-dev": "Install dependencies",
            "test": "Unit and integration tests",
            "test-unit": "Unit tests only",
            "test-integration": "Integration tests only",
            "test-slow": "Desk-scale model-quality checks",
            "coverage": "Fast suite under coverage",
            "lint": "ruff, black, isort",
            "format": "Auto-format",
            "type-check": "mypy",
            "check": "lint + type-check + test",
            "synth": f"Write the desk corpus to {SYNTH_DIR}",
            "tables": f"Desk tables 2 and 5 into {RUNS_DIR}/",
            "demo": "Synthesize, train and compare against the baseline",
            "help": "This message",
        }
        print("Commands:\n")
        for name, text in descriptions.items():
            print(f"  {name:<18} {text}")
        print("\nUsage: uv run python dev.py <command>")
        return 0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", nargs="?", default="help")
    args = parser.parse_args()

    dev = DevScript()
    if args.command in TEST_SELECTIONS:
        return dev.pytest(args.command)
    method = getattr(dev, args.command.replace("-", "_"), None)
    if method is None or args.command.startswith("sh") or args.command == "pytest":
        print(f"Unknown command: {args.command} (see `python dev.py help`)")
        return 1
    return method()


if __name__ == "__main__":
    sys.exit(main())
