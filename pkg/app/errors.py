from typing import Optional

from app.utils.constants import EXIT_CODES


class NetMatchError(Exception):
    """Base error carrying the process exit code and a human readable detail"""

    def __init__(self, exit_code: int, detail: str):
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail

    def __str__(self) -> str:
        return self.detail


class InputError(NetMatchError):
    """Bad input data, arguments or configuration"""

    def __init__(self, detail: str, line: Optional[int] = None):
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(EXIT_CODES["INPUT_ERROR"], detail)
        self.line = line


class EstimationUndefinedError(NetMatchError):
    """The estimator produced no usable matches or strata"""

    def __init__(self, detail: str):
        super().__init__(EXIT_CODES["ESTIMATION_UNDEFINED"], detail)


class InternalError(NetMatchError):
    """Unexpected failure inside a command"""

    def __init__(self, detail: str):
        super().__init__(EXIT_CODES["INTERNAL_ERROR"], detail)
