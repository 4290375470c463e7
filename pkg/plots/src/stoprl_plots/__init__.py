"""Figure rendering for stoprl run CSVs; pure file-to-image transforms."""

__version__ = "0.1.0"
