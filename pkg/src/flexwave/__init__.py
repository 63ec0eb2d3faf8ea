"""Learned multicarrier waveforms with PAPR-aware training and link-level baselines."""

__version__ = "0.1.0"
