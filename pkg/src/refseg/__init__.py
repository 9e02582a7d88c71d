"""Reference-guided segmentation assistant and dual-source semi-supervised trainer."""

__version__ = "0.1.0"
