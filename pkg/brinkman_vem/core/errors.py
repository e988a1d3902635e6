"""Exception hierarchy shared by the services and the command line."""

from typing import Optional


class BrinkmanError(Exception):
    """Root of every error raised by this package."""

    exit_code = 3


class ConfigError(BrinkmanError):
    exit_code = 2

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class MeshError(BrinkmanError):
    exit_code = 2


class MeshGenerationError(MeshError):
    pass


class MeshFormatError(MeshError):
    pass


class TaggingError(MeshError):
    def __init__(self, message: str, edges: Optional[list] = None):
        self.edges = list(edges or [])
        super().__init__(message)


class ExpressionError(BrinkmanError):
    exit_code = 2


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, text: str, offset: int):
        self.text = text
        self.offset = offset
        super().__init__(f"{message} at offset {offset}: {text!r}")


class ExpressionDomainError(ExpressionError):
    def __init__(self, message: str, subexpression: str):
        self.subexpression = subexpression
        super().__init__(f"{message} in '{subexpression}'")


class ElementError(BrinkmanError):
    def __init__(self, message: str, cell: Optional[int] = None):
        self.cell = cell
        super().__init__(f"cell {cell}: {message}" if cell is not None else message)


class AssemblyError(BrinkmanError):
    pass


class SolverError(BrinkmanError):
    pass


class ConvergenceError(BrinkmanError):
    exit_code = 2
