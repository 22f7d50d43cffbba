"""
Joint-limit-safe control for serial manipulators

This package maps each joint through a bounded tanh parametrization, closes
passivity-based tracking and set-point loops in the unconstrained coordinates
and simulates the resulting closed loop on a desk-scale two-link arm.
"""

__version__ = "0.1.0"
