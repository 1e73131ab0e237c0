"""dftbench: detect machine-generated text and stress-test the detectors."""

__version__ = "0.1.0"
