"""Exception types shared across modules."""


class DomainError(ValueError):
    """An argument lies outside the domain of a transform, chart or model."""


class IntegrationError(RuntimeError):
    """A numerical integral missed its error budget."""


class NotDecomposable(ValueError):
    """The graph has a chordless cycle; ``cycle`` holds one as a vertex tuple."""

    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__(f"graph is not decomposable; chordless cycle {self.cycle}")


class AssemblyError(ValueError):
    """Clique models disagree on a shared separator."""


class FitError(RuntimeError):
    """Censored likelihood fitting failed or had too little data."""


class InsufficientDataError(ValueError):
    """Too few observations or exceedances for the requested operation."""
