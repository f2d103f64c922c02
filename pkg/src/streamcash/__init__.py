"""AutoML pipeline search and adaptation on drifting data streams."""

__version__ = "0.1.0"
