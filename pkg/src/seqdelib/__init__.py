"""Sequential pairwise deliberation over metric spaces and median graphs."""

__version__ = "0.1.0"
