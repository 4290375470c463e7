"""TD3 with adaptive early episode termination on point-maze tasks."""

__version__ = "0.1.0"
