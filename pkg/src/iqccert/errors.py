class IqcCertError(Exception):
    """Base class for errors raised by this package."""


class KernelError(IqcCertError):
    pass


class DomainError(IqcCertError, ValueError):
    pass


class ValidationError(IqcCertError, ValueError):
    pass


class AssemblyError(IqcCertError, ValueError):
    pass


class SearchError(IqcCertError):
    """Step-size search failed; ``eta`` is where it stopped, if known."""

    def __init__(self, message, eta=None, diagnostics=None):
        super().__init__(message)
        self.eta = eta
        self.diagnostics = diagnostics


class DivergenceError(IqcCertError, FloatingPointError):
    def __init__(self, step):
        super().__init__(f"state became non-finite at step {step}")
        self.step = step


class MinimizerError(IqcCertError):
    pass
