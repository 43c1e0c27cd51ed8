"""Experiment harness: config, convergence, sweeps, reporting, CLI."""
