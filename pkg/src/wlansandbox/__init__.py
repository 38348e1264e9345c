"""Discrete-event WLAN simulator with bandit transmit-power control and an
ML-sandbox pipeline that vets learned configurations before deployment."""

__version__ = "0.1.0"
