"""
Error kinds shared by the model, simulation, analysis and fitting modules.
"""

from typing import Dict, List, Optional


class AdaptsimError(Exception):
    """Base class for all adaptsim failures"""


class InvalidParametersError(AdaptsimError, ValueError):
    """A model or rate-function parameter violates its invariant"""


class InvalidInputError(AdaptsimError, ValueError):
    """An operation precondition on its inputs does not hold"""


class UndefinedFixedPointError(AdaptsimError, ArithmeticError):
    """Every state is a fixed point (zero error under the coupled model)"""


class NumericOverflowError(AdaptsimError, ArithmeticError):
    """A simulated state left the finite range; the parameterization diverges"""

    def __init__(self, message: str, trial: Optional[int] = None):
        super().__init__(message)
        self.trial = trial


class NonContractiveFamilyError(AdaptsimError, ArithmeticError):
    """A general linear family has f(E) >= 1 with no fixed point at that error"""

    def __init__(self, message: str, errors: Optional[List[float]] = None):
        super().__init__(message)
        self.errors = errors or []


class ConfigError(AdaptsimError, ValueError):
    """
    A run configuration failed to parse or validate

    Args:
        message: Summary line
        field_errors: Mapping of field name to diagnostic
        source: File the configuration came from, if any
        lines: Line number of each field in the source file
    """

    def __init__(self, message: str, field_errors: Optional[Dict[str, str]] = None,
                 source: Optional[str] = None, lines: Optional[Dict[str, int]] = None):
        super().__init__(message)
        self.field_errors = field_errors or {}
        self.source = source
        self.lines = lines or {}

    def _prefix(self, key: Optional[str] = None) -> str:
        if not self.source:
            return ""
        line = self.lines.get(key.split("[")[0].split(".")[0]) if key else None
        return f"{self.source}:{line}: " if line else f"{self.source}: "

    def diagnostics(self) -> List[str]:
        if not self.field_errors:
            return [f"{self._prefix()}{self}"]
        return [f"{self._prefix(k)}field '{k}': {v}" for k, v in self.field_errors.items()]
