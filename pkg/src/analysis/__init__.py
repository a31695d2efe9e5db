"""Visibility, distinguishability and quantum-theory oracles."""
