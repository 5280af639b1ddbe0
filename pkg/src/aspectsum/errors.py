"""Exception types. Each carries the CLI exit code it maps to."""

from __future__ import annotations


class PipelineError(Exception):
    exit_code = 2

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        return f"{self.stage} stage failed: {self.message}" if self.stage else self.message


class ConfigError(PipelineError):
    exit_code = 1


class DataError(PipelineError):
    exit_code = 2


class EmptyCorpusError(DataError):
    pass


class BackendError(PipelineError):
    """Transport or protocol failure talking to an LLM or embedding service."""

    exit_code = 3


class ExtractionFailure(PipelineError):
    """An LLM response could not be parsed into arguments."""

    exit_code = 2


class SkipThresholdExceeded(PipelineError):
    exit_code = 4

    def __init__(self, message: str, *, skipped: list | None = None, stage: str | None = None):
        super().__init__(message, stage=stage)
        self.skipped = list(skipped or [])
