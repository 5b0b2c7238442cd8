"""Orchestration package - configuration, problem files, refinement studies and rate fits."""
