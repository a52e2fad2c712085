"""Tests for the holonomy laboratory."""
