"""Shared utilities: logging, errors and random streams."""
