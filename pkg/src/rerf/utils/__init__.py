"""Logging, seeding, error capture and id helpers."""
