"""Dagster assets for the seeded benchmark sweep."""
