"""Multi-modal loop-closure descriptors and a weather benchmark harness."""

__version__ = "0.1.0"
