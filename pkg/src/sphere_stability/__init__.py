"""Explicit stability constants for interpolation inequalities on spheres."""
