"""Core functionality for the Finsler Holonomy Lab."""
