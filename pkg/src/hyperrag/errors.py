"""Exception hierarchy shared across the package."""


class HyperRAGError(Exception):
    """Base class for all package errors."""


class EmptyDocumentError(HyperRAGError, ValueError):
    """A document has no usable text after normalization."""


class InvalidNameError(HyperRAGError, ValueError):
    """An entity name is empty after canonicalization."""


class MissingBindingError(HyperRAGError, KeyError):
    """A prompt template was rendered without one of its placeholders."""

    def __init__(self, template_id: str, names):
        self.template_id = template_id
        self.names = sorted(names)
        super().__init__(f"template {template_id!r} missing bindings: {', '.join(self.names)}")

    def __str__(self) -> str:
        return self.args[0]


class ConfigurationError(HyperRAGError):
    """Bad or missing configuration (including authentication failures)."""


class TransportError(HyperRAGError):
    """A model call failed after exhausting its retries."""


class IntegrityError(HyperRAGError):
    """Persisted or returned data violates its declared shape."""


class ExtractionEmptyError(HyperRAGError):
    """A model response contained no parseable records."""

    def __init__(self, kind: str, diagnostics=()):
        self.kind = kind
        self.diagnostics = list(diagnostics)
        super().__init__(f"no parseable {kind} records ({len(self.diagnostics)} diagnostics)")
