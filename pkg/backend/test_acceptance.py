"""
Acceptance runs for the shipped experiment configs.

These are the full-size experiments and take minutes to hours, so they only
run with QPL_ACCEPTANCE=true (QPL_THREADS speeds them up).
"""

import os
import sys
import tempfile
from pathlib import Path

import pytest

# Add src directory to path so imports work
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from experiments.experiment_config import load_config
from experiments.experiment_runner import run_experiment

CONFIG_DIR = Path(__file__).parent / "configs"
ENABLED = os.getenv("QPL_ACCEPTANCE", "false").lower() == "true"

SHIPPED = [
    "geom",
    "product-lemma",
    "chernoff",
    "mode1-law",
    "flatness",
    "flatness-n3",
    "flatness-n4",
    "flatness-n5",
    "flatness-n6",
    "flatness-tail",
    "purification",
    "owp-roundtrip",
    "approx-prob",
    "keyrec",
    "dualmode",
    "synth-exact-n2",
    "synth-exact-n3",
    "synth-exact",
    "synth",
    "pseudodet",
]


@pytest.mark.skipif(not ENABLED, reason="set QPL_ACCEPTANCE=true to run full-size experiments")
@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_config_passes(name, tmp_path):
    config = load_config(str(CONFIG_DIR / f"{name}.json"))
    result = run_experiment(config, str(tmp_path))
    assert result["summary"]["verdict"] == "pass", result["summary"]["metrics"]


def main():
    """Run every shipped config and report its verdict."""
    print("\n" + "=" * 80)
    print("ACCEPTANCE RUNS")
    print("=" * 80)
    failed = []
    for name in SHIPPED:
        with tempfile.TemporaryDirectory() as directory:
            summary = run_experiment(load_config(str(CONFIG_DIR / f"{name}.json")), directory)["summary"]
        mark = "✓" if summary["verdict"] == "pass" else "✗"
        print(f"{mark} {name}: {summary['metrics']}")
        if summary["verdict"] != "pass":
            failed.append(name)
    print("=" * 80 + "\n")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
