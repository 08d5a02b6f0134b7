"""Models package initialization file."""
