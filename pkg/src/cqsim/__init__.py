"""cqsim: a collaborative scene-drawing dialogue simulator whose drawer agent
asks clarification questions driven by its own predictive uncertainty."""

__version__ = "0.1.0"
