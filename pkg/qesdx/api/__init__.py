"""API package initialization file."""
