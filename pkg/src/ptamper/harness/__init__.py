"""Experiment runner and acceptance battery."""
