"""Experiment runs and per-event datasets."""
