"""Exception hierarchy shared by every stage.

The CLI maps these onto exit codes: ``InvalidArgument`` -> 2,
``DataFormatError`` -> 3, ``ContractViolation`` -> 4.
"""


class ScaError(Exception):
    """Base class for all package errors."""


class InvalidArgument(ScaError, ValueError):
    pass


class TraceTooShort(InvalidArgument):
    def __init__(self, required, actual, trace_id=None):
        self.required = required
        self.actual = actual
        self.trace_id = trace_id
        where = f" (trace {trace_id})" if trace_id is not None else ""
        super().__init__(f"trace too short{where}: need {required} samples, got {actual}")


class RankDeficient(InvalidArgument):
    def __init__(self, requested, achievable):
        self.requested = requested
        self.achievable = achievable
        super().__init__(
            f"requested {requested} components but the centered data has rank {achievable}"
        )


class FoldConstructionError(InvalidArgument):
    pass


class UnsupportedOperation(ScaError):
    pass


class ContractViolation(ScaError):
    pass


class DataFormatError(ScaError):
    pass


class CorruptionError(DataFormatError):
    def __init__(self, message, expected=None, found=None):
        self.expected = expected
        self.found = found
        super().__init__(message)


class UnsupportedVersion(DataFormatError):
    def __init__(self, version, supported):
        self.version = version
        self.supported = supported
        super().__init__(f"unsupported format version {version} (supported: {supported})")
