"""Pytest path hook: makes the shared oracle helpers importable."""
