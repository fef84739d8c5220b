"""Services package for the PhysMotion pipeline."""
