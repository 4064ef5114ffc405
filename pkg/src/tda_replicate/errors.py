"""Exception hierarchy shared across the package."""


class InvalidArgument(ValueError):
    """A caller-supplied value violates an operation's precondition."""


class DiagramParseError(InvalidArgument):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ResourceLimitError(MemoryError):
    """The requested computation exceeds the configured memory budget."""


class DegenerateNormalization(ArithmeticError):
    """The normalizing integral of a conditional density underflowed.

    Usually signals diverging model parameters.
    """

    def __init__(self, message: str, point_index: int | None = None):
        self.point_index = point_index
        super().__init__(message)


class FitFailure(RuntimeError):
    """Raised when maximum pseudolikelihood estimation cannot produce an estimate."""

    def __init__(self, message: str, alphas_probed=(), causes=None):
        self.alphas_probed = list(alphas_probed)
        self.causes = dict(causes or {})
        super().__init__(message)


class DivergingEstimate(FitFailure):
    """The Theta search ran away past the divergence guard."""


class EmptyProposal(InvalidArgument):
    """Every proposal cell fell below the density cutoff."""
