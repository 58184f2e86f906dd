"""Checklist documents shipped with the toolkit."""
