"""Event-representation distortion via the Gromov-Wasserstein discrepancy."""

__version__ = "0.1.0"
