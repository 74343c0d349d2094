"""CNN-Transformer modulation classifier with interchangeable attention masks."""

__version__ = "0.1.0"
