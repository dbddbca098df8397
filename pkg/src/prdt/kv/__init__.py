"""Replicated key-value store: consensus state over TCP/JSON deltas."""
