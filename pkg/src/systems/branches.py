import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from src.errors import ParameterRangeError
from src.utils.logger import logger


# ---------------------------
# Derivative models
# ---------------------------
@dataclass(frozen=True)
class ConstantSlope:
    value: float

    def log_bounds(self, interval: tuple) -> tuple:
        log_value = math.log(self.value)
        return log_value, log_value


@dataclass(frozen=True)
class Analytic:
    """
    |F'| given by an evaluator on the branch, with sup|F'|/inf|F'| <= distortion.

    When `monotone` is set, |F'| is monotone on the branch and endpoint
    evaluation is exact; otherwise endpoint values are widened by the
    distortion bound.
    """
    evaluator: Callable[[float], float]
    distortion: float
    monotone: bool = True

    def log_bounds(self, interval: tuple) -> tuple:
        left, right = interval
        values = (math.log(self.evaluator(left)), math.log(self.evaluator(right)))
        lo, hi = min(values), max(values)
        if not self.monotone:
            slack = math.log(self.distortion)
            lo, hi = hi - slack, lo + slack
        return lo, hi


@dataclass(frozen=True)
class Branch:
    index: int
    interval: tuple
    derivative_model: object
    tau_value: float
    increasing: bool = True

    def __post_init__(self):
        left, right = self.interval
        if not (0.0 <= left < right <= 1.0):
            raise ValueError(f"branch {self.index}: interval {self.interval} not inside [0,1]")
        if self.tau_value < 0:
            raise ValueError(f"branch {self.index}: tau must be nonnegative, got {self.tau_value}")

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]

    def log_derivative_bounds(self) -> tuple:
        """(inf, sup) of log|F'| on the branch."""
        return self.derivative_model.log_bounds(self.interval)


# ---------------------------
# Observable description
# ---------------------------
@dataclass(frozen=True)
class ScaleFunction:
    """omega(x) = x**rate ('polynomial') or exp(rate * x) ('exponential')."""
    kind: str
    rate: float

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential"):
            raise ValueError(f"unknown scale kind {self.kind!r}")
        if self.rate <= 0:
            raise ValueError(f"scale rate must be positive, got {self.rate}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(self.log(x))

    def log(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "polynomial":
            return self.rate * np.log(x)
        return self.rate * x

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "polynomial":
            return self.rate * x ** (self.rate - 1.0)
        return self.rate * np.exp(self.rate * x)

    @property
    def ratio_bound(self) -> float:
        """sup_n omega(n+1)/omega(n) over n >= 1."""
        if self.kind == "polynomial":
            return 2.0 ** self.rate
        return math.exp(self.rate)


@dataclass(frozen=True)
class TailModel:
    beta: float
    beta1: float
    beta2: float
    ell_bound: tuple = (1.0, 1.0)

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ParameterRangeError("tail model", f"beta in (0,1), got beta={self.beta}")
        if self.beta1 < self.beta or self.beta2 < self.beta:
            raise ParameterRangeError("tail model", "beta1, beta2 >= beta")

    @property
    def rate_exponent(self) -> float:
        """beta/(1-beta), the decay exponent of b* - b(alpha)."""
        return self.beta / (1.0 - self.beta)

    @property
    def q_exponent(self) -> float:
        """-1/(1-beta), the decay exponent of q(alpha)."""
        return -1.0 / (1.0 - self.beta)


@dataclass(frozen=True)
class Observable:
    value_of: Callable[[int], float]
    scale: Optional[ScaleFunction]
    tail: Optional[TailModel]


# ---------------------------
# Shell tables
# ---------------------------
@dataclass(frozen=True)
class ShellGrowth:
    """
    Leading growth of the shell data used by the finiteness tests.

    kind='power':      count ~ x**count_rate, tau ~ x**tau_rate, |F'| ~ x**slope_rate
    kind='geometric':  count ~ e**(count_rate x), tau ~ e**(tau_rate x), |F'| ~ e**(slope_rate x)
    """
    kind: str
    count_rate: float
    tau_rate: float
    slope_rate: float

    @property
    def threshold(self) -> float:
        return -1.0 if self.kind == "power" else 0.0

    def weight_rate(self, b: float, tau_power: int = 0) -> float:
        return self.count_rate - b * self.slope_rate + tau_power * self.tau_rate

    def converges_at_q_zero(self, b: float, tau_power: int = 0) -> bool:
        return self.weight_rate(b, tau_power) < self.threshold

    def critical_b(self) -> float:
        """Smallest b for which sum count * |F'|**-b converges."""
        return (self.count_rate - self.threshold) / self.slope_rate


SHELL_FIELDS = ("index", "log_count", "tau", "log_slope", "log_slope_lo", "log_slope_hi", "measure")


@dataclass(frozen=True)
class ShellTable:
    """
    Per-shell arrays for shells 1..size. Every letter of a shell shares the
    same tau, slope data and geometric measure `measure` (per letter).

    log_slope is the locally constant representative -log mu([a]);
    log_slope_lo / log_slope_hi bound log|F'| on the letter's cylinder.
    """
    index: np.ndarray
    log_count: np.ndarray
    tau: np.ndarray
    log_slope: np.ndarray
    log_slope_lo: np.ndarray
    log_slope_hi: np.ndarray
    measure: np.ndarray

    @property
    def size(self) -> int:
        return int(self.index.size)

    @property
    def count(self) -> np.ndarray:
        return np.exp(self.log_count)

    def head(self, n: int) -> "ShellTable":
        if n >= self.size:
            return self
        return ShellTable(*(getattr(self, name)[:n] for name in SHELL_FIELDS))

    @staticmethod
    def concat(first: Optional["ShellTable"], arrays: dict) -> "ShellTable":
        if first is None:
            return ShellTable(**{name: np.asarray(arrays[name], dtype=float) for name in SHELL_FIELDS})
        return ShellTable(*(
            np.concatenate([getattr(first, name), np.asarray(arrays[name], dtype=float)])
            for name in SHELL_FIELDS
        ))


# ---------------------------
# Base class
# ---------------------------
class FullBranchMap:
    """
    A countably- (or finitely-) full-branched expanding interval map with a
    locally constant observable tau.

    Subclasses provide shell data through `_shell_arrays(lo, hi)` (shells
    lo..hi-1), the smooth continuation `smooth_shells(x)` used for tail
    sums beyond a truncation, and the geometry of single branches.
    """

    name = "abstract"
    image_interval = (0.0, 1.0)
    expansion_constant = 2.0
    expansion_iterate = 1
    known_b_star: Optional[float] = 1.0
    comparable_scaling_K = 1.0
    locally_constant = True
    alphabet_size: Optional[int] = None
    max_shells: Optional[int] = None
    growth: Optional[ShellGrowth] = None
    default_depth = 2
    # bound on |log| of the ratio between the true and the computed length normalizer
    log_length_slack = 0.0

    def __init__(self, params: dict):
        self.params = dict(params)
        self._table: Optional[ShellTable] = None
        self._lock = threading.Lock()
        self.observable = Observable(
            value_of=self.tau_of_letter,
            scale=self.scale_function(),
            tail=self.tail_model(),
        )

    # ---------------------------
    # Hooks for subclasses
    # ---------------------------
    def _shell_arrays(self, lo: int, hi: int) -> dict:
        raise NotImplementedError

    def smooth_shells(self, x: np.ndarray) -> dict:
        raise NotImplementedError(f"{self.name} has a finite alphabet")

    def tail_count_slack(self, n: int) -> float:
        """Relative error of the smooth letter counts beyond shell n; zero where they are exact."""
        return 0.0

    def branch(self, letter: int) -> Branch:
        raise NotImplementedError

    def inverse_branch(self, letters: np.ndarray, t: np.ndarray) -> tuple:
        """
        Vectorized inverse branches: returns (x, log|F'(x)|) with x the
        preimage of t under the branch of each letter.
        """
        raise NotImplementedError

    def reference_density(self, y):
        """
        Positive monotone test function for the transfer-operator bounds:
        the density of the geometric measure when it is known in closed form.
        """
        return np.ones_like(np.asarray(y, dtype=float))

    def branch_intervals(self, n: int) -> tuple:
        """(left, right) endpoint arrays of the branches of letters 1..n."""
        intervals = [self.branch(a).interval for a in range(1, n + 1)]
        return np.array([i[0] for i in intervals]), np.array([i[1] for i in intervals])

    def scale_function(self) -> Optional[ScaleFunction]:
        return None

    def tail_model(self) -> Optional[TailModel]:
        return None

    # ---------------------------
    # Derived properties
    # ---------------------------
    @property
    def is_finite(self) -> bool:
        return self.alphabet_size is not None

    @property
    def image_length(self) -> float:
        return self.image_interval[1] - self.image_interval[0]

    def truncation_limit(self, n: int) -> int:
        """Largest usable shell truncation not above n."""
        limit = n
        if self.alphabet_size is not None:
            limit = min(limit, self.alphabet_size)
        if self.max_shells is not None:
            limit = min(limit, self.max_shells)
        return max(int(limit), 1)

    def descriptor(self) -> dict:
        return {"system": self.name, **self.params}

    # ---------------------------
    # Memoized shell table
    # ---------------------------
    def shells(self, n: int) -> ShellTable:
        """
        Shell data for shells 1..n (clipped to the alphabet). The table grows
        lazily; reads of an already filled prefix do not take the lock.
        """
        n = self.truncation_limit(n)
        table = self._table
        if table is not None and table.size >= n:
            return table.head(n)
        with self._lock:
            table = self._table
            current = 0 if table is None else table.size
            if current < n:
                target = self.truncation_limit(max(n, 2 * current))
                logger.debug(f"{self.name}: extending shell table {current} -> {target}")
                self._table = ShellTable.concat(table, self._shell_arrays(current + 1, target + 1))
            return self._table.head(n)

    # ---------------------------
    # Letters and shells
    # ---------------------------
    def shell_letter_counts(self, n: int) -> np.ndarray:
        """Number of letters in shells 1..n (floats; exact below 2**53)."""
        return np.rint(self.shells(n).count)

    def shell_of_letter(self, letter: int) -> tuple:
        """(shell index, 0-based position inside the shell) of a letter."""
        if letter < 1:
            raise ValueError(f"letters start at 1, got {letter}")
        n = self.truncation_limit(16)
        while True:
            counts = self.shell_letter_counts(n)
            cumulative = np.cumsum(counts)
            if cumulative[-1] >= letter:
                shell = int(np.searchsorted(cumulative, letter)) + 1
                before = int(cumulative[shell - 2]) if shell > 1 else 0
                return shell, letter - before - 1
            if self.truncation_limit(2 * n) == n:
                raise ValueError(f"letter {letter} outside the alphabet of {self.name}")
            n = self.truncation_limit(2 * n)

    def tau_of_letter(self, letter: int) -> float:
        shell, _ = self.shell_of_letter(letter)
        return float(self.shells(shell).tau[shell - 1])

    def geometric_measure(self, letter: int) -> float:
        shell, _ = self.shell_of_letter(letter)
        return float(self.shells(shell).measure[shell - 1])

    def letters_to_shells(self, letters: np.ndarray) -> np.ndarray:
        letters = np.asarray(letters, dtype=np.int64)
        top = int(letters.max()) if letters.size else 1
        counts = self.shell_letter_counts(self.truncation_limit(top))
        cumulative = np.cumsum(counts)
        return np.searchsorted(cumulative, letters) + 1

    def truncate(self, n: int) -> "FullBranchMap":
        from src.systems.linear import TruncatedSystem
        return TruncatedSystem(self, n)

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"


def right_aligned_interval(lengths: np.ndarray, counts: np.ndarray, shell: int, position: int,
                           right_end: float = 1.0) -> tuple:
    """
    Interval of the `position`-th letter of `shell` when branches are laid out
    from the right end leftwards (letter 1 rightmost).
    """
    before = math.fsum(lengths[: shell - 1] * counts[: shell - 1])
    left_used = before + (position + 1) * lengths[shell - 1]
    right_used = before + position * lengths[shell - 1]
    return max(right_end - left_used, 0.0), right_end - right_used
