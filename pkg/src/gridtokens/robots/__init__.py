"""Managed tokens for unattended robot identities."""
from .manager import (
    ACTIVE,
    DEFAULT_THRESHOLD,
    OPERATOR_ACTION,
    CycleReport,
    Destination,
    EnrollmentFailed,
    OnboardTimeout,
    RobotError,
    RobotExists,
    RobotManager,
    RobotRecord,
)
from .transport import LocalDirectoryTransport, PushError, PushOutcome, PushTransport, push_token
