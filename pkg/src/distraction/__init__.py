"""Inverse-attention noise estimation and denoising for camera-based physiological measurement."""

__version__ = "0.1.0"
