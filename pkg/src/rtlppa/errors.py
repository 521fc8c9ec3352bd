"""Exception hierarchy shared by every stage."""

from __future__ import annotations


class RtlPpaError(Exception):
    """Base class for all package errors."""


class DomainError(RtlPpaError, ValueError):
    """An argument lies outside the domain of a formula."""


class VerilogParseError(RtlPpaError):
    """Source could not be parsed at the module-declaration level."""


class AmbiguousTopError(VerilogParseError):
    """Several uninstantiated modules and no configured top."""


class UnsupportedConstructError(VerilogParseError):
    """Source uses a construct the lightweight parser refuses to guess at."""


class TestbenchError(RtlPpaError):
    """The interface cannot be turned into a comparison testbench."""

    __test__ = False


class ToolUnavailableError(RtlPpaError):
    """An external tool (simulator, synthesizer, endpoint) is missing or unreachable."""


class ToolTimeoutError(ToolUnavailableError):
    """An external tool exceeded its time limit."""


class ReportParseError(RtlPpaError):
    """A tool report lacks a metric or states it inconsistently."""

    def __init__(self, metric: str, message: str | None = None):
        self.metric = metric
        super().__init__(message or f"report has no usable {metric!r} value")


class TemplateError(RtlPpaError, KeyError):
    """A prompt template is unknown or has unbound placeholders."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class RuleRejectedError(RtlPpaError):
    """Rule score does not clear the library acceptance threshold."""


class EmbeddingDimensionError(RtlPpaError):
    """Embedding dimension disagrees with the library."""


class EmptyLibraryError(RtlPpaError):
    """Retrieval was attempted on a library with no rules."""


class DegeneratePairError(RtlPpaError):
    """Code pair has (near) zero PPA gap, so rewrite scores are undefined."""


class InputDesignError(RtlPpaError):
    """The design handed to the optimizer cannot serve as a search root."""


class ConfigError(RtlPpaError):
    """Run configuration is missing a key or names an unknown adapter."""
