"""Baseband RF cavity simulator with drift- and detuning-aware observers.

The closed loop runs a forward-Euler IQ cavity model, a field/disturbance
ESO extended with forward-drift, receiver-drift and detuning observers, and
feedforward inversion plus one-step LQR feedback.  :mod:`cavityobs.harness`
runs single trials and paired Monte Carlo ensembles.
"""

__version__ = "0.1.0"
