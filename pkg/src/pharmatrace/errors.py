"""Error taxonomy shared across the node, gateway and tooling.

Every failure that can surface through the transaction path or an HTTP
body carries a stable ``code`` so clients can match on it.
"""

from __future__ import annotations


class PharmatraceError(Exception):
    """Base class; ``code`` is the stable machine-readable name."""

    code = "Error"

    def payload(self) -> dict:
        return {"error": self.code, "message": str(self)}


# ---- transaction admission ----


class InvalidSignature(PharmatraceError):
    code = "InvalidSignature"


class BadNonce(PharmatraceError):
    code = "BadNonce"


class UnknownOperation(PharmatraceError):
    code = "UnknownOperation"


# ---- block production / chain ----


class NotScheduledValidator(PharmatraceError):
    code = "NotScheduledValidator"


class ChainCorrupt(PharmatraceError):
    code = "ChainCorrupt"

    def __init__(self, height: int, reason: str = ""):
        super().__init__(f"chain corrupt at height {height}" + (f": {reason}" if reason else ""))
        self.height = height
        self.reason = reason

    def payload(self) -> dict:
        return {"error": self.code, "message": str(self), "height": self.height}


# ---- guards and roles ----


class GuardFailed(PharmatraceError):
    """A modifier check rejected the call; ``kind`` names the guard."""

    code = "GuardFailed"

    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"{kind}" + (f": {detail}" if detail else ""))
        self.kind = kind

    def payload(self) -> dict:
        return {"error": self.code, "kind": self.kind, "message": str(self)}


class RoleDenied(GuardFailed):
    code = "RoleDenied"


class AlreadyHasRole(PharmatraceError):
    code = "AlreadyHasRole"


# ---- supply-chain contract ----


class DuplicateUPC(PharmatraceError):
    code = "DuplicateUPC"


class UnknownUPC(PharmatraceError):
    code = "UnknownUPC"


# ---- oracle bridge ----


class InsufficientLink(PharmatraceError):
    code = "InsufficientLink"


class UnknownField(PharmatraceError):
    code = "UnknownField"


class UnknownRequest(PharmatraceError):
    code = "UnknownRequest"


class AlreadyFulfilled(PharmatraceError):
    code = "AlreadyFulfilled"


class RequestExpired(PharmatraceError):
    code = "RequestExpired"


class DuplicateResponse(PharmatraceError):
    code = "DuplicateResponse"


class QuorumNotReached(PharmatraceError):
    code = "QuorumNotReached"


class GatewayUnreachable(PharmatraceError):
    code = "GatewayUnreachable"


class SkuNotFound(PharmatraceError):
    code = "SkuNotFound"


# ---- telemetry pipeline ----


class MalformedScenario(PharmatraceError):
    code = "MalformedScenario"


class BrokerUnavailable(PharmatraceError):
    code = "BrokerUnavailable"


class BadMessageSignature(PharmatraceError):
    code = "BadSignature"


class MalformedMessage(PharmatraceError):
    code = "MalformedMessage"


# ---- tooling ----


class TargetUnavailable(PharmatraceError):
    code = "TargetUnavailable"


class UnknownAccount(PharmatraceError):
    code = "UnknownAccount"
