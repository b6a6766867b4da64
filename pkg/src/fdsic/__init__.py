"""Self-interference cancellation for in-band full-duplex OFDM links:
least-squares and FastICA-based blind source separation."""

__version__ = "0.1.0"
