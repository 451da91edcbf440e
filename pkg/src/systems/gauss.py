import math

import numpy as np

from src.errors import ParameterRangeError
from src.systems.branches import Analytic, Branch, FullBranchMap, ScaleFunction, ShellGrowth, TailModel

LOG2 = math.log(2.0)


def gauss_measure(n):
    """Gauss measure of the cylinder (1/(n+1), 1/n]."""
    n = np.asarray(n, dtype=float)
    return np.log1p(1.0 / (n * (n + 2.0))) / LOG2


class GaussSystem(FullBranchMap):
    """
    Gauss map F(x) = 1/x - n on (1/(n+1), 1/n], tau = n**r.

    |F'| = 1/x**2 is not constant on branches; its locally constant
    representative is -log mu_G([n]) (mu_G the Gauss measure), and the
    endpoint values 2 log n, 2 log(n+1) bound log|F'| on branch n.
    |F'| is only >= 1 near x = 1, but |(F^2)'| >= 4 everywhere.
    """

    name = "gauss"
    locally_constant = False
    expansion_constant = 2.0
    expansion_iterate = 2
    comparable_scaling_K = 4.0

    def __init__(self, r: int):
        if int(r) != r or r <= 1:
            raise ParameterRangeError(self.name, f"integer r > 1, got r={r}")
        self.r = int(r)
        self.growth = ShellGrowth("power", count_rate=0.0, tau_rate=float(self.r), slope_rate=2.0)
        super().__init__({"r": self.r})

    def _arrays(self, n) -> dict:
        n = np.asarray(n, dtype=float)
        measure = gauss_measure(n)
        return {
            "index": n,
            "log_count": np.zeros_like(n),
            "tau": n ** self.r,
            "log_slope": -np.log(measure),
            "log_slope_lo": 2.0 * np.log(n),
            "log_slope_hi": 2.0 * np.log(n + 1.0),
            "measure": measure,
        }

    def _shell_arrays(self, lo: int, hi: int) -> dict:
        return self._arrays(np.arange(lo, hi, dtype=float))

    def smooth_shells(self, x) -> dict:
        return self._arrays(x)

    def scale_function(self):
        return ScaleFunction("polynomial", float(self.r))

    def tail_model(self):
        beta = 1.0 / self.r
        return TailModel(beta=beta, beta1=2.0 * beta, beta2=2.0 * beta)

    def branch(self, letter: int) -> Branch:
        n = int(letter)
        if n < 1:
            raise ValueError(f"letters start at 1, got {letter}")
        return Branch(
            index=n,
            interval=(1.0 / (n + 1), 1.0 / n),
            derivative_model=Analytic(
                evaluator=lambda x: 1.0 / (x * x),
                distortion=((n + 1.0) / n) ** 2,
                monotone=True,
            ),
            tau_value=float(n ** self.r),
            increasing=False,
        )

    def inverse_branch(self, letters, t) -> tuple:
        # g_n(t) = 1/(n+t), log|F'(g_n(t))| = 2 log(n+t)
        shifted = np.asarray(letters, dtype=float) + np.asarray(t, dtype=float)
        return 1.0 / shifted, 2.0 * np.log(shifted)

    def reference_density(self, y):
        return 1.0 / (LOG2 * (1.0 + np.asarray(y, dtype=float)))

    def branch_intervals(self, n: int) -> tuple:
        k = np.arange(1, n + 1, dtype=float)
        return 1.0 / (k + 1.0), 1.0 / k
