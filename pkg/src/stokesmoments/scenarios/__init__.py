"""Bundled scenario files and their JSON schema."""
