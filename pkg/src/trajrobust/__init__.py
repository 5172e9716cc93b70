"""Trajectory accuracy and velocity-based robustness evaluation."""
