"""Experiment configuration, output formats, comparisons and the command line."""
