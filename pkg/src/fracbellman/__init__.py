"""Monotone solvers and regularity checks for nonlocal concave Bellman equations."""
