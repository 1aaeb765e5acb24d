"""Regularity diagnostics evaluated on solved fields."""
