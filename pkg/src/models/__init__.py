"""Message and result data models."""
