"""Classifiers, the umbrella fit, baselines and the simulation lab."""
