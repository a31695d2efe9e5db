"""Optical processing units."""
