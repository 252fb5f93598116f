"""Exception types shared across the package.

Everything raised on purpose derives from CpforgeError so callers can
catch the package's failures in one clause when they want to.
"""


class CpforgeError(Exception):
    """Base class for all package-specific errors."""


class ProfileParseError(CpforgeError):
    """Analyzer output contained a bracketed list that could not be parsed."""


class StoreFormatError(CpforgeError):
    """A knowledge-base file failed validation.

    Carries the 1-based line number of the first offending record.
    """

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DimensionMismatchError(CpforgeError):
    """Two vectors of different lengths were compared."""


class ZeroVectorError(CpforgeError):
    """Cosine similarity was asked for a zero vector; callers treat it as 0."""


class EmptyStoreError(CpforgeError):
    """Retrieval was attempted against a store with no exemplars."""


class EmbedderUnavailableError(CpforgeError):
    """The embedding backend could not produce a vector."""


class TemplateError(CpforgeError):
    """A prompt template referenced a slot that was not supplied."""

    def __init__(self, message: str, missing_slot: str | None = None):
        self.missing_slot = missing_slot
        super().__init__(message)


class GatewayError(CpforgeError):
    """A text-generation backend call failed.

    ``reason`` is one of: timeout, http_status, retries_exhausted.
    """

    def __init__(self, message: str, reason: str = "retries_exhausted"):
        self.reason = reason
        super().__init__(message)


class EmptyResponseError(CpforgeError):
    """The backend returned an empty response where code was expected."""


class RunnerUnavailableError(CpforgeError):
    """The solver runner shim is missing or failed its handshake.

    Infrastructure failure: never counted against the candidate model.
    """


class AllBranchesFailedError(CpforgeError):
    """Every tree node scored zero and the tree is exhausted.

    Carries the best-effort candidate and the tree trace so the caller
    can continue into self-correction.
    """

    def __init__(self, best_candidate, trace, best_eval=None):
        self.best_candidate = best_candidate
        self.trace = trace
        self.best_eval = best_eval
        super().__init__("all explored branches scored 0")


class EmptyRunError(CpforgeError):
    """Solving accuracy was requested over zero reports."""


class ConfigError(CpforgeError):
    """A run configuration value is missing or invalid.

    ``key`` names the offending configuration key.
    """

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)
