import math
import threading

import numpy as np

from src.errors import ParameterRangeError, RootFindingError
from src.systems.branches import Analytic, Branch, FullBranchMap, ScaleFunction, ShellGrowth, TailModel

LOG2 = math.log(2.0)
ROOT_TOLERANCE = 1e-14
BISECTION_STEPS = 3
NEWTON_MAX_STEPS = 60


def _left_preimage(lam: float, target: float, depth: int) -> float:
    """
    Solve y (1 + 2**lam y**lam) = target on [0, min(target, 1/2)].

    A few bisection steps shrink the bracket, then Newton runs from the right
    end; f is increasing and convex on [0, 1/2] so the iterates decrease
    monotonically towards the root.
    """
    scale = 2.0 ** lam
    lo, hi = 0.0, min(target, 0.5)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid * (1.0 + scale * mid ** lam) < target:
            lo = mid
        else:
            hi = mid
    y = hi
    for _ in range(NEWTON_MAX_STEPS):
        value = y * (1.0 + scale * y ** lam) - target
        slope = 1.0 + (lam + 1.0) * scale * y ** lam
        step = value / slope
        y -= step
        if abs(step) <= ROOT_TOLERANCE:
            return y
    residual = abs(y * (1.0 + scale * y ** lam) - target)
    raise RootFindingError(depth=depth, target=target, residual=residual)


def left_preimages(lam: float, targets: np.ndarray, depth: int = 0) -> np.ndarray:
    """Vectorized `_left_preimage`; targets must lie in (0, 1]."""
    targets = np.asarray(targets, dtype=float)
    scale = 2.0 ** lam
    lo = np.zeros_like(targets)
    hi = np.minimum(targets, 0.5)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = mid * (1.0 + scale * mid ** lam) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    y = hi
    for _ in range(NEWTON_MAX_STEPS):
        value = y * (1.0 + scale * y ** lam) - targets
        step = value / (1.0 + (lam + 1.0) * scale * y ** lam)
        y = y - step
        if np.all(np.abs(step) <= ROOT_TOLERANCE):
            return y
    residual = float(np.max(np.abs(y * (1.0 + scale * y ** lam) - targets)))
    raise RootFindingError(depth=depth, target=float(targets.flat[0]), residual=residual)


class MannevillePomeauInduced(FullBranchMap):
    """
    First return map F = f^tau to (1/2, 1] of the Manneville-Pomeau map
    f(y) = y(1 + 2**lam y**lam) on [0, 1/2], f(y) = 2y - 1 on (1/2, 1].

    z_0 = 1/2 and z_k is the left-branch preimage of z_{k-1}. The branch with
    return time n is ((1 + z_{n-1})/2, (1 + z_{n-2})/2] with z_{-1} = 1;
    its normalized measure is z_{n-2} - z_{n-1} = 2**lam z_{n-1}**(1+lam).
    F' is increasing on every branch, so with c_k = log f'(z_k) and
    S_m = sum_{k<m} c_k the endpoint values log 2 + S_n - c_0 and
    log 2 + S_{n-1} are the exact inf and sup of log|F'|.
    """

    name = "mp_induced"
    image_interval = (0.5, 1.0)
    locally_constant = False
    expansion_constant = 2.0
    default_depth = 1

    def __init__(self, lam: float):
        if not (lam > 1):
            raise ParameterRangeError(self.name, f"lambda > 1, got lambda={lam}")
        self.lam = float(lam)
        self.scale = 2.0 ** self.lam
        self.comparable_scaling_K = 2.0 + self.lam
        self.growth = ShellGrowth("power", count_rate=0.0, tau_rate=1.0, slope_rate=1.0 + 1.0 / self.lam)
        self._z = [0.5]
        self._c = [math.log(self._derivative(0.5))]
        self._partial = [0.0, self._c[0]]
        self._orbit_lock = threading.Lock()
        super().__init__({"lambda": self.lam})

    def _derivative(self, y):
        return 1.0 + (self.lam + 1.0) * self.scale * y ** self.lam

    # ---------------------------
    # Backward orbit of 1/2
    # ---------------------------
    def orbit(self, k_max: int) -> tuple:
        """(z, c, S) arrays with z_0..z_{k_max}, c_k = log f'(z_k), S_m = sum_{k<m} c_k."""
        if len(self._z) <= k_max:
            with self._orbit_lock:
                z, c, partial = self._z, self._c, self._partial
                while len(z) <= k_max:
                    depth = len(z)
                    nxt = _left_preimage(self.lam, z[-1], depth)
                    z.append(nxt)
                    c.append(math.log(self._derivative(nxt)))
                    partial.append(partial[-1] + c[-1])
        n = k_max + 1
        return (np.asarray(self._z[:n]), np.asarray(self._c[:n]), np.asarray(self._partial[:n + 1]))

    def _shell_arrays(self, lo: int, hi: int) -> dict:
        z, c, partial = self.orbit(hi - 1)
        n = np.arange(lo, hi)
        measure = self.scale * z[n - 1] ** (1.0 + self.lam)
        return {
            "index": n.astype(float),
            "log_count": np.zeros(n.size),
            "tau": n.astype(float),
            "log_slope": -np.log(measure),
            "log_slope_lo": LOG2 + partial[n] - c[0],
            "log_slope_hi": LOG2 + partial[n - 1],
            "measure": measure,
        }

    def smooth_shells(self, x) -> dict:
        """
        Continuation past the computed orbit with z(k) = (lam 2**lam (k + k0))**(-1/lam),
        k0 matched to the last computed z, and sum_{k<m} c_k continued by
        (1 + 1/lam) log(m + k0 - 1/2).
        """
        x = np.asarray(x, dtype=float)
        k_end = max(len(self._z) - 1, 1)
        z, c, partial = self.orbit(k_end)
        k0 = z[k_end] ** (-self.lam) / (self.lam * self.scale) - k_end

        def z_of(k):
            return (self.lam * self.scale * (k + k0)) ** (-1.0 / self.lam)

        def partial_of(m):
            grow = (1.0 + 1.0 / self.lam) * np.log((m - 0.5 + k0) / (k_end - 0.5 + k0))
            return partial[k_end] + grow

        measure = self.scale * z_of(x - 1.0) ** (1.0 + self.lam)
        return {
            "index": x,
            "log_count": np.zeros_like(x),
            "tau": x,
            "log_slope": -np.log(measure),
            "log_slope_lo": LOG2 + partial_of(x) - c[0],
            "log_slope_hi": LOG2 + partial_of(x - 1.0),
            "measure": measure,
        }

    def scale_function(self):
        return ScaleFunction("polynomial", 1.0)

    def tail_model(self):
        beta = 1.0 / self.lam
        return TailModel(beta=beta, beta1=beta + 1.0, beta2=beta + 1.0)

    # ---------------------------
    # Branch geometry
    # ---------------------------
    def _endpoints(self, n: int) -> tuple:
        z, _, _ = self.orbit(n)
        right_z = 1.0 if n == 1 else z[n - 2]
        return 0.5 * (1.0 + z[n - 1]), 0.5 * (1.0 + right_z)

    def derivative_at(self, x: float) -> float:
        """|F'(x)| by following the orbit of 2x - 1 back into (1/2, 1]."""
        y = 2.0 * x - 1.0
        if y <= 0.0:
            raise ValueError(f"x={x} outside the inducing domain (1/2, 1]")
        value = 2.0
        while y <= 0.5:
            value *= self._derivative(y)
            y = y * (1.0 + self.scale * y ** self.lam)
        return value

    def branch(self, letter: int) -> Branch:
        n = int(letter)
        if n < 1:
            raise ValueError(f"letters start at 1, got {letter}")
        table = self.shells(n)
        distortion = math.exp(table.log_slope_hi[n - 1] - table.log_slope_lo[n - 1])
        return Branch(
            index=n,
            interval=self._endpoints(n),
            derivative_model=Analytic(evaluator=self._branch_evaluator(n), distortion=distortion),
            tau_value=float(n),
            increasing=True,
        )

    def _branch_evaluator(self, n: int):
        table = self.shells(n)
        lo, hi = table.log_slope_lo[n - 1], table.log_slope_hi[n - 1]
        left, right = self._endpoints(n)

        def evaluate(x: float) -> float:
            # closed endpoints map to the orbit of 1/2 exactly
            if x <= left:
                return math.exp(lo)
            if x >= right:
                return math.exp(hi)
            return self.derivative_at(x)
        return evaluate

    def inverse_branch(self, letters, t) -> tuple:
        """
        x = (1 + y_{n-1})/2 with y_0 = t and y_k the left preimage of y_{k-1};
        log|F'(x)| = log 2 + sum_{k=1}^{n-1} log f'(y_k).
        """
        letters, t = np.broadcast_arrays(np.asarray(letters, dtype=np.int64), np.asarray(t, dtype=float))
        y = t.copy()
        log_derivative = np.full(letters.shape, LOG2)
        steps = int(letters.max()) - 1 if letters.size else 0
        for k in range(1, steps + 1):
            active = letters > k
            if not np.any(active):
                break
            y_new = left_preimages(self.lam, y[active], depth=k)
            y[active] = y_new
            log_derivative[active] += np.log(self._derivative(y_new))
        return 0.5 * (1.0 + y), log_derivative

    def branch_intervals(self, n: int) -> tuple:
        z, _, _ = self.orbit(n)
        right_z = np.concatenate([[1.0], z[: n - 1]])
        return 0.5 * (1.0 + z[:n]), 0.5 * (1.0 + right_z)


def mp_branch_table(lam: float, n: int) -> list:
    """First n branches of the induced Manneville-Pomeau map."""
    if n < 1:
        raise ParameterRangeError("mp_branch_table", f"N >= 1, got N={n}")
    system = MannevillePomeauInduced(lam)
    return [system.branch(k) for k in range(1, n + 1)]
