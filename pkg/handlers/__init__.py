"""Command-line subcommand handlers for the PhysMotion pipeline."""
