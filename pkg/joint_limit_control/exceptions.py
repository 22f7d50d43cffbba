"""
Error types raised by the joint-limit control library.

Every error derives from JointLimitControlError so callers (the CLI in
particular) can map them onto exit codes in one place.
"""

from typing import Optional, Sequence


class JointLimitControlError(Exception):
    """Base class for all library errors."""


class OutOfFeasibleSpace(JointLimitControlError, ValueError):
    """
    A joint state or reference lies on or outside the open box (q_min, q_max).

    Attributes:
        joints: Indices of the offending joints (may be empty if unknown)
        t: Simulation time at which it happened, when raised inside a run
    """

    def __init__(self, message: str, joints: Sequence[int] = (), t: Optional[float] = None):
        self.joints = tuple(int(j) for j in joints)
        self.t = t
        if t is not None:
            message = f"{message} (t = {t:.6f} s)"
        super().__init__(message)

    def at_time(self, t: float) -> "OutOfFeasibleSpace":
        """Return a copy of this error stamped with a simulation time."""
        base = str(self) if self.t is None else str(self).rsplit(" (t = ", 1)[0]
        return OutOfFeasibleSpace(base, joints=self.joints, t=t)


class NumericalDivergence(JointLimitControlError, ArithmeticError):
    """The integrated state contains NaN or inf."""

    def __init__(self, message: str, t: Optional[float] = None):
        self.t = t
        if t is not None:
            message = f"{message} (t = {t:.6f} s)"
        super().__init__(message)


class EmptyTrace(JointLimitControlError, ValueError):
    """A report was requested for a trace without records."""


class ReportsNoBreak(JointLimitControlError):
    """A force ramp reached its cap without driving any joint to its limit."""

    def __init__(self, law: str, cap: float):
        self.law = law
        self.cap = cap
        super().__init__(f"law '{law}' held the limits up to the force cap ({cap:.1f} N)")


class ConfigError(JointLimitControlError, ValueError):
    """Experiment config file could not be read or failed validation."""
