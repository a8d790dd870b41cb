"""Exception types shared across the package.

Callers distinguish configuration mistakes (``SchemaError``, ``ValueError``)
from numerical failures (``DegenerateElementError``, ``InvertedElementError``,
divergence errors), which matters for CLI exit codes.
"""


class SchemaError(ValueError):
    """A file or message failed validation against its versioned schema."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class DegenerateElementError(RuntimeError):
    """Element has a non-positive rest Jacobian."""

    def __init__(self, element_id, detail=""):
        super().__init__(f"degenerate element {element_id}: {detail}".rstrip(": "))
        self.element_id = element_id


class InvertedElementError(RuntimeError):
    """Element inverted (det F <= 0) during a simulation."""

    def __init__(self, element_id, step=None):
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"element {element_id} inverted (det F <= 0){where}")
        self.element_id = element_id
        self.step = step


class RolloutDivergenceError(RuntimeError):
    """A learned rollout produced non-finite state."""

    def __init__(self, step):
        super().__init__(f"rollout diverged at step {step}")
        self.step = step


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message):
        super().__init__(message)


class StaleTraceError(RuntimeError):
    """A recorded computation trace was reused after backward()."""
