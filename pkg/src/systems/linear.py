import math

import numpy as np
from scipy.special import zeta

from src.errors import ParameterRangeError
from src.systems.branches import (
    Branch,
    ConstantSlope,
    FullBranchMap,
    ScaleFunction,
    ShellGrowth,
    TailModel,
    right_aligned_interval,
)


class ConstantSlopeMap(FullBranchMap):
    """
    Piecewise linear full-branch maps. Every letter of shell n has length
    `shell_length(n)` inside the image interval and constant slope |I|/length;
    branches are laid out from the right end, shell 1 first.
    """

    locally_constant = True

    # ---------------------------
    # Shell description (vectorized over real x)
    # ---------------------------
    def shell_length(self, x):
        raise NotImplementedError

    def shell_log_count(self, x, smooth: bool = False):
        return np.zeros_like(np.asarray(x, dtype=float))

    def shell_tau(self, x):
        raise NotImplementedError

    def _arrays(self, x, smooth: bool) -> dict:
        x = np.asarray(x, dtype=float)
        length = self.shell_length(x)
        log_slope = math.log(self.image_length) - np.log(length)
        return {
            "index": x,
            "log_count": self.shell_log_count(x, smooth=smooth),
            "tau": self.shell_tau(x),
            "log_slope": log_slope,
            "log_slope_lo": log_slope,
            "log_slope_hi": log_slope,
            "measure": length / self.image_length,
        }

    def _shell_arrays(self, lo: int, hi: int) -> dict:
        return self._arrays(np.arange(lo, hi, dtype=float), smooth=False)

    def smooth_shells(self, x) -> dict:
        return self._arrays(x, smooth=True)

    # ---------------------------
    # Branch geometry
    # ---------------------------
    def _letter_geometry(self, letters: np.ndarray) -> tuple:
        """Left endpoints and lengths of the branches of `letters`."""
        letters = np.asarray(letters, dtype=np.int64)
        shells = self.letters_to_shells(letters)
        table = self.shells(int(shells.max()))
        lengths = table.measure * self.image_length
        counts = np.rint(table.count)
        used = np.concatenate([[0.0], np.cumsum(lengths * counts)])
        letters_before = np.concatenate([[0.0], np.cumsum(counts)])
        position = letters - letters_before[shells - 1] - 1
        shell_len = lengths[shells - 1]
        left = self.image_interval[1] - (used[shells - 1] + (position + 1) * shell_len)
        return np.maximum(left, self.image_interval[0]), shell_len

    def branch(self, letter: int) -> Branch:
        shell, position = self.shell_of_letter(letter)
        table = self.shells(shell)
        lengths = table.measure * self.image_length
        interval = right_aligned_interval(lengths, np.rint(table.count), shell, position,
                                          right_end=self.image_interval[1])
        return Branch(
            index=letter,
            interval=interval,
            derivative_model=ConstantSlope(self.image_length / lengths[shell - 1]),
            tau_value=float(table.tau[shell - 1]),
            increasing=True,
        )

    def inverse_branch(self, letters, t) -> tuple:
        left, length = self._letter_geometry(letters)
        t = np.asarray(t, dtype=float)
        x = left + (t - self.image_interval[0]) * length / self.image_length
        return x, np.log(self.image_length / length) + np.zeros_like(x)

    def branch_intervals(self, n: int) -> tuple:
        letters = np.arange(1, n + 1)
        left, length = self._letter_geometry(letters)
        return left, left + length


# ---------------------------
# Builtin families
# ---------------------------
class LuerothSystem(ConstantSlopeMap):
    """Lueroth map F(x) = n(n+1)x - n on [1/(n+1), 1/n), tau = n**r."""

    name = "lueroth"
    expansion_constant = 2.0

    def __init__(self, r: int):
        if int(r) != r or r <= 1:
            raise ParameterRangeError(self.name, f"integer r > 1, got r={r}")
        self.r = int(r)
        self.growth = ShellGrowth("power", count_rate=0.0, tau_rate=float(self.r), slope_rate=2.0)
        super().__init__({"r": self.r})

    def shell_length(self, x):
        return 1.0 / (x * (x + 1.0))

    def shell_tau(self, x):
        return x ** self.r

    def scale_function(self):
        return ScaleFunction("polynomial", float(self.r))

    def tail_model(self):
        beta = 1.0 / self.r
        return TailModel(beta=beta, beta1=2.0 * beta, beta2=2.0 * beta)

    def _letter_geometry(self, letters):
        n = np.asarray(letters, dtype=float)
        return 1.0 / (n + 1.0), 1.0 / (n * (n + 1.0))

    def branch(self, letter: int) -> Branch:
        n = int(letter)
        if n < 1:
            raise ValueError(f"letters start at 1, got {letter}")
        return Branch(
            index=n,
            interval=(1.0 / (n + 1), 1.0 / n),
            derivative_model=ConstantSlope(float(n * (n + 1))),
            tau_value=float(n ** self.r),
            increasing=True,
        )


class LinearPolySystem(ConstantSlopeMap):
    """Branch n of length C_s n**-(1+s), C_s = 1/zeta(1+s); tau = n**r."""

    name = "linear_poly"

    def __init__(self, r: float, s: float):
        if not (r > 0):
            raise ParameterRangeError(self.name, f"r > 0, got r={r}")
        if not (0 < s < r):
            raise ParameterRangeError(self.name, f"0 < s < r, got s={s}, r={r}")
        self.r = float(r)
        self.s = float(s)
        self.normalizer = 1.0 / float(zeta(1.0 + self.s))
        self.expansion_constant = 1.0 / self.normalizer
        self.growth = ShellGrowth("power", count_rate=0.0, tau_rate=self.r, slope_rate=1.0 + self.s)
        super().__init__({"r": self.r, "s": self.s})

    def shell_length(self, x):
        return self.normalizer * x ** (-(1.0 + self.s))

    def shell_tau(self, x):
        return x ** self.r

    def scale_function(self):
        return ScaleFunction("polynomial", self.r)

    def tail_model(self):
        beta = self.s / self.r
        return TailModel(beta=beta, beta1=beta + 1.0 / self.r, beta2=beta + 1.0 / self.r)


class LinearCountSystem(ConstantSlopeMap):
    """
    Shell n holds floor(n**c) letters, each of length C n**-a, with tau = n**b.
    C normalizes the total length to one.

    For non-integer c the normalizer and the smooth tail counts are only
    known within n**c - 1 < floor(n**c) <= n**c; `log_length_slack` and
    `tail_count_slack` carry that error into the pressure bounds.
    """

    name = "linear_count"
    HEAD_TERMS = 1 << 16

    def __init__(self, a: float, b: float, c: float):
        if not (0 < c < a):
            raise ParameterRangeError(self.name, f"0 < c < a, got a={a}, c={c}")
        if not (b > 0):
            raise ParameterRangeError(self.name, f"b > 0, got b={b}")
        beta = (a - c - 1.0) / b
        if not (0 < beta < 1):
            raise ParameterRangeError(self.name, f"(a-c-1)/b in (0,1), got {beta}")
        self.a, self.b, self.c = float(a), float(b), float(c)
        self.integer_count = float(c).is_integer()
        total_lo, total_hi = self._total_weight_bounds()
        total = 0.5 * (total_lo + total_hi)
        self.normalizer = 1.0 / total
        self.log_length_slack = max(math.log(total_hi / total), math.log(total / total_lo))
        self.expansion_constant = 1.0 / self.normalizer
        self.growth = ShellGrowth("power", count_rate=self.c, tau_rate=self.b, slope_rate=self.a)
        super().__init__({"a": self.a, "b": self.b, "c": self.c})

    def _counts(self, n):
        if self.integer_count:
            return n ** int(self.c)
        return np.floor(n ** self.c)

    def _total_weight_bounds(self) -> tuple:
        """Bounds on sum_n floor(n^c) n^-a: exact head, zeta tails."""
        n = np.arange(1, self.HEAD_TERMS + 1, dtype=float)
        head = math.fsum(self._counts(n) * n ** (-self.a))
        m = self.HEAD_TERMS + 1
        tail = float(zeta(self.a - self.c, m))
        if self.integer_count:
            return head + tail, head + tail
        return head + tail - float(zeta(self.a, m)), head + tail

    def tail_count_slack(self, n: int) -> float:
        if self.integer_count:
            return 0.0
        # smooth count n^c - 1/2 against floor(n^c) in (n^c - 1, n^c]
        return 0.5 / max((n + 1.0) ** self.c - 0.5, 0.5)

    def shell_length(self, x):
        return self.normalizer * x ** (-self.a)

    def shell_log_count(self, x, smooth: bool = False):
        x = np.asarray(x, dtype=float)
        if smooth:
            count = x ** self.c if self.integer_count else np.maximum(x ** self.c - 0.5, 1.0)
            return np.log(count)
        return np.log(self._counts(x))

    def shell_tau(self, x):
        return x ** self.b

    def scale_function(self):
        return ScaleFunction("polynomial", self.b)

    def tail_model(self):
        ratio = self.a / self.b
        return TailModel(beta=(self.a - self.c - 1.0) / self.b, beta1=ratio, beta2=ratio)


class LinearExpSystem(ConstantSlopeMap):
    """
    Shell n holds 2**n letters of length K/(2**n e**(beta n)), K = e**beta - 1,
    with tau = e**n.
    """

    name = "linear_exp"
    # tau**2 = e**(2n) stays finite; weights beyond are zero for q > 0
    max_shells = 300

    def __init__(self, beta: float):
        if not (0 < beta < 1):
            raise ParameterRangeError(self.name, f"beta in (0,1), got beta={beta}")
        self.beta = float(beta)
        self.normalizer = math.expm1(self.beta)
        self.expansion_constant = 2.0 * math.exp(self.beta) / self.normalizer
        self.growth = ShellGrowth("geometric", count_rate=math.log(2.0), tau_rate=1.0,
                                  slope_rate=math.log(2.0) + self.beta)
        super().__init__({"beta": self.beta})

    def shell_length(self, x):
        x = np.asarray(x, dtype=float)
        return self.normalizer * np.exp(-x * (math.log(2.0) + self.beta))

    def shell_log_count(self, x, smooth: bool = False):
        return np.asarray(x, dtype=float) * math.log(2.0)

    def shell_tau(self, x):
        return np.exp(np.asarray(x, dtype=float))

    def scale_function(self):
        return ScaleFunction("exponential", 1.0)

    def tail_model(self):
        return TailModel(beta=self.beta, beta1=self.beta + math.log(2.0), beta2=self.beta + math.log(2.0))


# ---------------------------
# Finite systems
# ---------------------------
class FiniteLinearSystem(ConstantSlopeMap):
    """Finitely many linear full branches with given lengths and tau values."""

    name = "finite_linear"
    known_b_star = None

    def __init__(self, lengths, taus=None, image_interval: tuple = (0.0, 1.0)):
        lengths = np.asarray(lengths, dtype=float)
        taus = np.zeros_like(lengths) if taus is None else np.asarray(taus, dtype=float)
        self.image_interval = tuple(float(v) for v in image_interval)
        width = self.image_interval[1] - self.image_interval[0]
        if lengths.ndim != 1 or lengths.size == 0:
            raise ParameterRangeError(self.name, "at least one branch length")
        if taus.shape != lengths.shape:
            raise ParameterRangeError(self.name, "one tau value per branch")
        if np.any(lengths <= 0) or np.any(lengths >= width):
            raise ParameterRangeError(self.name, "branch lengths in (0, |I|)")
        if math.fsum(lengths) > width * (1.0 + 1e-15):
            raise ParameterRangeError(self.name, "total branch length <= |I|")
        if np.any(taus < 0):
            raise ParameterRangeError(self.name, "tau >= 0")
        self.lengths = lengths
        self.taus = taus
        self.alphabet_size = int(lengths.size)
        self.expansion_constant = float(width / lengths.max())
        super().__init__({
            "lengths": ",".join(repr(float(v)) for v in lengths),
            "taus": ",".join(repr(float(v)) for v in taus),
        })

    def _pick(self, values, x):
        index = np.asarray(x, dtype=np.int64) - 1
        return values[index]

    def shell_length(self, x):
        return self._pick(self.lengths, x)

    def shell_tau(self, x):
        return self._pick(self.taus, x)


class TruncatedSystem(FullBranchMap):
    """The first N shells of another system, as a finite full-branch map."""

    known_b_star = None

    def __init__(self, base: FullBranchMap, n: int):
        if n < 1:
            raise ParameterRangeError("truncated", f"N >= 1, got N={n}")
        self.base = base
        self.name = f"{base.name}_truncated"
        self.alphabet_size = base.truncation_limit(n)
        self.image_interval = base.image_interval
        self.expansion_constant = base.expansion_constant
        self.expansion_iterate = base.expansion_iterate
        self.comparable_scaling_K = base.comparable_scaling_K
        self.locally_constant = base.locally_constant
        super().__init__({**base.params, "truncation": self.alphabet_size})

    def _shell_arrays(self, lo: int, hi: int) -> dict:
        table = self.base.shells(hi - 1)
        return {name: getattr(table, name)[lo - 1:hi - 1] for name in
                ("index", "log_count", "tau", "log_slope", "log_slope_lo", "log_slope_hi", "measure")}

    def branch(self, letter: int) -> Branch:
        self.shell_of_letter(letter)  # raises outside the truncated alphabet
        return self.base.branch(letter)

    def inverse_branch(self, letters, t) -> tuple:
        return self.base.inverse_branch(letters, t)

    def descriptor(self) -> dict:
        return {"system": self.base.name, **self.params}
