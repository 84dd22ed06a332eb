"""End-to-end recovery tests."""
