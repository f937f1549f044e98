"""Experiment configs, the sweep runner and result files."""
