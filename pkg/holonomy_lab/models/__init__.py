"""Pydantic models shared by services and the command line."""
