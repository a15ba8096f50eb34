"""Closed-loop system identification toolkit.

Stabilized prediction-error identification through a simulated closed loop,
the dual-Youla coprime-factorization route, and direct ARX/ARMAX baselines,
with a Monte-Carlo experiment CLI built around a simulated magnetic
levitation benchmark.
"""

__version__ = "0.1.0"
