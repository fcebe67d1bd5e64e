#!/usr/bin/env python3
"""
Main Runner
Central script for running H-NP tasks from the repository root
"""

import sys

from hnp_umbrella.main import TASKS, main as run_task


def main():
    """Main function."""

    if len(sys.argv) < 2:
        print("Usage: python main_runner.py <task> [flags]")
        print("Available tasks:")
        print("  - simulate: Monte Carlo comparison on a preset setting")
        print("  - fit: Fit an H-NP classifier on a dataset CSV")
        print("  - predict: Label a dataset CSV with a fitted model")
        print("  - evaluate: Error report of a fitted model on labelled data")
        print("  - sweep: Errors over candidate t_1 ranks")
        print("  - featurize: Build feature vectors from a patient cohort")
        return 0

    if sys.argv[1] not in TASKS:
        print(f"Unknown task: {sys.argv[1]}")
        print(f"Available tasks: {', '.join(TASKS)}")
        return 2

    return run_task(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
