from typing import Iterable, Optional


class KrnError(Exception):
    """Base class for every error raised by the kernel toolkit"""


class InvalidArgument(KrnError, ValueError):
    """An argument is outside the domain of the operation"""


class SpaceMismatch(KrnError):
    """Two kernels or spaces that must coincide do not"""


class IndexMismatch(KrnError):
    """A vector is indexed by a different space than the operation expects"""


class AbsoluteContinuityViolation(KrnError):
    """A measure puts mass on a cell that is null for the reference measure"""


class MalformedDocument(KrnError):
    """An input file could not be decoded into the expected structure"""


class ParseError(KrnError):
    """Program text does not match the grammar"""

    def __init__(
        self,
        position: int,
        expected: Iterable[str],
        found: str,
        reason: Optional[str] = None,
    ):
        self.position = position
        self.expected = sorted(set(expected))
        self.found = found
        self.reason = reason
        super().__init__(self._describe())

    def _describe(self) -> str:
        if self.reason:
            return f"at position {self.position}: {self.reason}"
        if len(self.expected) == 1:
            wanted = self.expected[0]
        else:
            wanted = "one of " + ", ".join(self.expected)
        return f"at position {self.position}: expected {wanted} but found {self.found}"


class StarNotAllowed(KrnError):
    """A star-free program was required"""


class UnsupportedProgram(KrnError):
    """The program shape cannot be evaluated"""


class NumericFailure(KrnError):
    """Numerical or resource failure (CLI exit code 3)"""


class TailMassTooLarge(NumericFailure):
    """Prior mass outside the truncation window exceeds the tolerance"""


class QuadratureFailure(NumericFailure):
    """Quadrature produced a row that is too far from stochastic"""


class StateBudgetExceeded(NumericFailure):
    """The reachable chain has more states than allowed"""

    def __init__(self, count: int, budget: int):
        self.count = count
        self.budget = budget
        super().__init__(
            f"reachable chain exceeded the state budget ({count} > {budget})"
        )


class PairBudgetExceeded(NumericFailure):
    """The (state, visited union) enumeration has more pairs than allowed"""

    def __init__(self, count: int, budget: int):
        self.count = count
        self.budget = budget
        super().__init__(
            f"path-union enumeration exceeded the pair budget ({count} > {budget})"
        )
