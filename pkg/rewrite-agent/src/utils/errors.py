from typing import Any, Optional


class RewriteError(Exception):
    """Base class for every error the pipeline raises on purpose"""

    category = "error"
    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def describe(self) -> str:
        """One-line categorized message for the CLI"""
        return f"{self.category}: {self.message}"


class ParseError(RewriteError):
    category = "parse"
    exit_code = 3

    def __init__(self, message: str, line: Optional[int] = None, **context: Any):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, line=line, **context)
        self.line = line


class IntegrityError(RewriteError):
    category = "integrity"
    exit_code = 3


class FormatError(RewriteError):
    category = "format"
    exit_code = 3


class ConfigError(RewriteError, ValueError):
    category = "config"
    exit_code = 4


class ContractError(RewriteError):
    category = "contract"
    exit_code = 1


class VerificationError(RewriteError):
    category = "verification"
    exit_code = 1


class TrainingDataError(RewriteError):
    category = "training-data"
    exit_code = 5


class NumericalError(RewriteError):
    category = "numerical"
    exit_code = 5


class TrainingDivergedError(NumericalError):
    """Training hit a non-finite loss; the partial report is attached"""

    category = "diverged"

    def __init__(self, message: str, report: Any = None, **context: Any):
        super().__init__(message, **context)
        self.report = report
