"""Test suite for the PhysMotion pipeline."""
