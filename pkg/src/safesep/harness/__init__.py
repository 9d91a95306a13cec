"""Experiment harness: configuration, training and evaluation runs, persistence and CLI."""
