"""Exception hierarchy shared across the package."""


class TeleclassError(Exception):
    """Base class for all package errors."""


class TaxonomyError(TeleclassError):
    """Invalid taxonomy structure or query."""


class CorpusError(TeleclassError):
    """Invalid corpus file or corpus query."""


class VectorStoreError(TeleclassError):
    """Invalid vector file."""


class MissingVectorError(VectorStoreError, LookupError):
    """A required key is absent from the vector store."""

    def __init__(self, namespace: str, key: str):
        super().__init__(f"no vector for {namespace}:{key}")
        self.namespace = namespace
        self.key = key


class ParseError(TeleclassError):
    """An LLM response could not be parsed; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class BackendError(TeleclassError):
    """Completion backend failure."""


class TransportError(BackendError):
    """Backend unreachable or persistently failing after retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class RateLimitError(BackendError):
    """Backend rate limit still exceeded after retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class ConfigError(TeleclassError):
    """Invalid pipeline configuration."""


class StageError(TeleclassError):
    """A pipeline stage could not run or failed."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
