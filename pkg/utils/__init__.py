"""Utilities package for the PhysMotion pipeline."""
