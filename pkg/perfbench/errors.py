"""Exception hierarchy.

Codec errors also derive from ValueError so callers that only care about
"bad bytes" can catch the builtin.
"""

from __future__ import annotations


class PerfbenchError(Exception):
    """Base class for every error raised by perfbench."""


# ---------------------------------------------------------------------------
# OpenFlow codec
# ---------------------------------------------------------------------------

class CodecError(PerfbenchError, ValueError):
    pass


class Truncated(CodecError):
    """Fewer bytes than the header announces; buffer more and retry."""

    def __init__(self, needed: int, available: int) -> None:
        super().__init__(f"Need {needed} bytes, have {available}")
        self.needed = needed
        self.available = available


class UnknownType(CodecError):
    """Message type outside the supported set. ``length`` bytes can be skipped."""

    def __init__(self, msg_type: int, length: int, xid: int) -> None:
        super().__init__(f"Unsupported OpenFlow message type {msg_type} (len={length})")
        self.msg_type = msg_type
        self.length = length
        self.xid = xid


class MalformedBody(CodecError):
    pass


class OversizeBody(CodecError):
    pass


# ---------------------------------------------------------------------------
# Probe correlation
# ---------------------------------------------------------------------------

class UnmatchedReply(PerfbenchError):
    pass


class DuplicateReply(PerfbenchError):
    pass


class MalformedProbe(PerfbenchError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Emulated components
# ---------------------------------------------------------------------------

class ConnectFailed(PerfbenchError):
    pass


class HandshakeTimeout(PerfbenchError):
    pass


class WriteFailed(PerfbenchError):
    pass


class SendFailed(PerfbenchError):
    pass


class NoMatchingSlice(PerfbenchError):
    pass


class NoMatchingTenant(PerfbenchError):
    pass


class UnknownVirtualAddress(PerfbenchError):
    pass


class OverlappingFlowspace(PerfbenchError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

class EmptyWindow(PerfbenchError):
    pass


class ZeroMean(PerfbenchError, ValueError):
    pass


class ProcessGone(PerfbenchError):
    pass


class ExportError(PerfbenchError, OSError):
    pass


# ---------------------------------------------------------------------------
# Scenario / orchestration
# ---------------------------------------------------------------------------

class ParseError(PerfbenchError):
    pass


class InvalidScenario(PerfbenchError, ValueError):
    """Scenario failed validation. ``problems`` lists one entry per bad field."""

    def __init__(self, problems: list[str]) -> None:
        super().__init__("Invalid scenario: " + "; ".join(problems))
        self.problems = problems


class ComponentLaunchFailed(PerfbenchError):
    pass
