class ThermoformalError(Exception):
    """
    Base class for every domain failure raised by the toolkit.

    The CLI maps any subclass to a nonzero exit status after the partial
    artifacts have been written.
    """


# ---------------------------
# Systems
# ---------------------------
class ParameterRangeError(ThermoformalError):
    def __init__(self, system: str, constraint: str):
        self.system = system
        self.constraint = constraint
        super().__init__(f"{system}: parameter out of range, requires {constraint}")


class RootFindingError(ThermoformalError):
    def __init__(self, depth: int, target: float, residual: float):
        self.depth = depth
        self.target = target
        self.residual = residual
        super().__init__(
            f"preimage solver did not converge at depth n={depth} "
            f"(target={target!r}, residual={residual:.3e})"
        )


class SolverError(ThermoformalError):
    """A scipy root finder refused its inputs or did not converge."""


class NotLocallyConstantError(ThermoformalError):
    pass


# ---------------------------
# Tail hypotheses
# ---------------------------
class H1ViolationError(ThermoformalError):
    def __init__(self, shell: int, omega_lo: float, omega_hi: float):
        self.shell = shell
        super().__init__(
            f"H1 violated: shell n={shell} [{omega_lo!r}, {omega_hi!r}) contains no letter"
        )


class NonFiniteMeasureError(ThermoformalError):
    pass


class RegressionError(ThermoformalError):
    pass


class SandwichViolationError(ThermoformalError):
    def __init__(self, violations: list):
        self.violations = violations
        shells = ", ".join(str(v["shell"]) for v in violations[:10])
        super().__init__(f"H3 sandwich fails at shells: {shells}")


# ---------------------------
# Pressure
# ---------------------------
class DomainError(ThermoformalError):
    pass


class ToleranceNotReachedError(ThermoformalError):
    def __init__(self, estimate, tolerance: float):
        self.estimate = estimate
        self.tolerance = tolerance
        super().__init__(
            f"pressure sandwich [{estimate.lower!r}, {estimate.upper!r}] wider than "
            f"{tolerance!r} at truncation cap N={estimate.truncation_N}"
        )


class WordCountOverflowError(ThermoformalError):
    def __init__(self, words: int, cap: int):
        self.words = words
        self.cap = cap
        super().__init__(
            f"{words} cylinder words exceed the cap {cap}; use a smaller depth or truncation"
        )


class BowenWindowError(ThermoformalError):
    def __init__(self, window: tuple, values: tuple):
        self.window = window
        self.values = values
        super().__init__(
            f"no sign change of t -> P(-t log|F'|) on window {window} (values {values})"
        )


# ---------------------------
# Spectrum
# ---------------------------
class DegenerateObservableError(ThermoformalError):
    pass


class NewtonDivergenceError(ThermoformalError):
    def __init__(self, alpha: float, q: float, b: float, residuals: tuple, iterations: int):
        self.alpha = alpha
        self.q = q
        self.b = b
        self.residuals = residuals
        self.iterations = iterations
        super().__init__(
            f"Newton stopped at alpha={alpha!r} after {iterations} iterations: "
            f"q={q!r}, b={b!r}, residuals={residuals}"
        )


class InsufficientPointsError(ThermoformalError):
    pass


# ---------------------------
# Rate
# ---------------------------
class GapBelowNoiseError(ThermoformalError):
    def __init__(self, alpha: float, gap: float, residual: float):
        self.alpha = alpha
        super().__init__(
            f"gap b*-b={gap:.3e} at alpha={alpha!r} is not 100x above the residual {residual:.3e}"
        )


class TailFitError(ThermoformalError):
    pass


# ---------------------------
# Reports / CLI
# ---------------------------
class EmptyCurveError(ThermoformalError):
    pass


class ConfigError(ThermoformalError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
