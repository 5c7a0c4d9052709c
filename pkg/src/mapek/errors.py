"""Exception types shared across the control plane."""


class ConfigError(Exception):
    """Invalid configuration detected at startup."""


class ScenarioError(Exception):
    """Scenario file is malformed or violates a load-time invariant."""


class JournalWriteError(Exception):
    """The journal could not be persisted; the loop must halt (fail-stop)."""


class JournalCorruptError(Exception):
    """Replay hit a malformed record. Carries the last valid seq."""

    def __init__(self, message: str, last_valid_seq: int):
        super().__init__(message)
        self.last_valid_seq = last_valid_seq


class UnknownTargetError(Exception):
    """A plan step targets a service the environment does not know."""


class UnknownActionError(Exception):
    """An action kind is missing from the risk registry; the plan is rejected."""


class ApprovalStateError(Exception):
    """An approval decision hit an unknown, expired or already-decided request."""
