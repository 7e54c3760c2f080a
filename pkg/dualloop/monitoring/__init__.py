"""Scenario metrics."""
