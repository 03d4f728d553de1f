"""System-dynamics simulation of youth flow through a foster-care pipeline."""

__version__ = "0.1.0"
