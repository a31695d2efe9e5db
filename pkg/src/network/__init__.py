"""Network wiring and routing."""
