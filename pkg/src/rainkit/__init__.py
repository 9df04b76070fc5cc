"""Rainfall forecasting toolkit: U-Net regression, isotonic calibration and verification."""

__version__ = "0.1.0"
