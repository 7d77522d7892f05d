"""Planning sterile-insect releases on patch networks."""

__version__ = "0.1.0"
