"""Exception taxonomy for the engine.

Every error carries a stable ``code`` (its class name) used verbatim in the
wire format's ``{code, message}`` error bodies.
"""


class MugcatError(Exception):
    """Base class; ``code`` is the class name."""

    @property
    def code(self) -> str:
        return type(self).__name__


# domain model
class InvalidResolution(MugcatError):
    pass


class InvalidWindow(MugcatError):
    pass


class InvalidThreshold(MugcatError):
    pass


# codec
class DecodeError(MugcatError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ingest
class BadMagic(MugcatError):
    pass


class TruncatedPayload(MugcatError):
    pass


class DimensionMismatch(MugcatError):
    pass


# backend protocol
class Unreachable(MugcatError):
    def __init__(self, message: str, elapsed_ms: float):
        super().__init__(f"{message} (after {elapsed_ms:.1f} ms)")
        self.elapsed_ms = elapsed_ms


class StageMismatch(MugcatError):
    pass


class UnsupportedVersion(MugcatError):
    pass


class DeadlineExceeded(MugcatError):
    def __init__(self, message: str, elapsed_ms: float):
        super().__init__(f"{message} (after {elapsed_ms:.1f} ms)")
        self.elapsed_ms = elapsed_ms


class MalformedResponse(MugcatError):
    pass


class BackendError(MugcatError):
    def __init__(self, status: int, message: str):
        super().__init__(f"backend returned {status}: {message}")
        self.status = status


# stubs
class PayloadTooLarge(MugcatError):
    pass


class EmptyText(MugcatError):
    pass


# selection
class EmptyKeywords(MugcatError):
    pass


class DimMismatch(MugcatError):
    pass


class ZeroVector(MugcatError):
    pass


# pipeline
class StageFailed(MugcatError):
    def __init__(self, stage: str, cause: Exception, timings_ms: dict[str, float] | None = None):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.timings_ms = dict(timings_ms or {})


class TurnTimeout(MugcatError):
    def __init__(self, budget_s: float, timings_ms: dict[str, float] | None = None):
        super().__init__(f"turn exceeded {budget_s:g} s budget")
        self.budget_s = budget_s
        self.timings_ms = dict(timings_ms or {})


# bench
class LengthMismatch(MugcatError):
    pass


class TooFewSamples(MugcatError):
    pass


class EigenFailure(MugcatError):
    pass


# gateway
class UnknownSession(MugcatError):
    pass


class UnknownTurn(MugcatError):
    pass


class IndexOutOfRange(MugcatError):
    pass


class BindError(MugcatError):
    pass


class BackendUnreachable(MugcatError):
    pass
