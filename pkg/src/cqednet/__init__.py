"""Linear and saturated response of a fiber-coupled two-cavity atom network."""

__version__ = "0.1.0"
