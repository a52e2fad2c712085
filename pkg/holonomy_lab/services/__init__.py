"""Numerical services: towers, metrics, sprays, transport and circle algebra."""
