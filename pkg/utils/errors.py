# utils/errors.py
from __future__ import annotations

from typing import List, Optional


class ContinuumError(Exception):
    """Base for every error raised by the planner / simulator stack."""
    exit_code = 1


# ---------- geometry / safety ----------
class DegenerateBasis(ContinuumError):
    pass

class SingularDeformation(ContinuumError):
    pass

class AgentOutsideTriangle(ContinuumError):
    pass

class InfeasibleMargins(ContinuumError):
    pass

class DeltaExceedsMax(ContinuumError):
    pass


# ---------- environment ----------
class OutOfBounds(ContinuumError):
    pass


# ---------- planner ----------
class NoPath(ContinuumError):
    exit_code = 3

class BudgetExceeded(ContinuumError):
    exit_code = 3

class GoalOffGrid(ContinuumError):
    exit_code = 3


# ---------- trajectory ----------
class OutOfSegment(ContinuumError):
    pass

class OutOfHorizon(ContinuumError):
    pass


# ---------- dynamics / control / sim ----------
class NonFiniteState(ContinuumError):
    exit_code = 4

class GimbalLock(ContinuumError):
    exit_code = 4

class ThrustSingularity(ContinuumError):
    exit_code = 4

class SimulationAborted(ContinuumError):
    """Carries the partial log so the caller can still write it out."""
    exit_code = 4

    def __init__(self, message: str, partial_log=None, cause: Optional[Exception] = None):
        super().__init__(message)
        self.partial_log = partial_log
        self.cause = cause


# ---------- scenario files ----------
class ScenarioParseError(ContinuumError):
    exit_code = 2

class ScenarioValidationError(ContinuumError):
    exit_code = 2

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) or "invalid scenario")
