import math

import numpy as np

from src.config import Config
from src.errors import WordCountOverflowError
from src.pressure.potential import Potential
from src.pressure.series import ShellSeries
from src.systems.branches import FullBranchMap
from src.systems.geometry import word_block
from src.utils.helper import Helper
from src.utils.logger import log_event

GRID_POINTS = 512
CELL_BUDGET = 1 << 21


def _log(value) -> float:
    value = float(value)
    return math.log(value) if value > 0 else -math.inf


def _tail_terms(system: FullBranchMap, potential: Potential, n_letters: int) -> tuple:
    """
    U = sum_{a <= N} sup_[a] e^psi, and bounds T_inf <= sum_{a > N} e^psi <= T_sup
    from the shell tables (sup uses the smallest log|F'| on each branch).
    """
    upper = ShellSeries(system, potential.q, potential.b, slope="lo").evaluate(n_letters)
    lower = ShellSeries(system, potential.q, potential.b, slope="hi").evaluate(n_letters)
    scale_up, scale_lo = math.exp(upper.shift), math.exp(lower.shift)
    return (upper.head[0] * scale_up, upper.tail_upper * scale_up, lower.tail_lower * scale_lo)


def _depth_sums(system: FullBranchMap, potential: Potential, depth: int, n_letters: int,
                grid: np.ndarray, workers: int) -> np.ndarray:
    """
    Over all words v of length `depth` with letters <= N, and every grid cell
    [y_i, y_{i+1}], sums of lower and upper bounds of
        e^{S psi(g_v y)} rho(g_v y),
    followed by sum_v inf e^{S psi} and sum_v sup e^{S psi} over the cylinder.
    Both factors are monotone in y, so endpoint values bound each cell.
    """
    words_total = n_letters ** depth
    per_block = max(1, CELL_BUDGET // grid.size)

    def block(lo: int, hi: int) -> np.ndarray:
        words = word_block(n_letters, depth, lo, hi)
        shells = system.letters_to_shells(words.ravel()).reshape(words.shape)
        tau = system.shells(int(shells.max())).tau[shells - 1].sum(axis=1)
        x = np.broadcast_to(grid, (words.shape[0], grid.size)).copy()
        log_derivative = np.zeros_like(x)
        for j in range(depth - 1, -1, -1):
            x, step = system.inverse_branch(words[:, j:j + 1], x)
            log_derivative += step
        weight = np.exp(-potential.q * tau[:, None] - potential.b * log_derivative)
        density = system.reference_density(x)
        weight_lo, weight_hi = np.minimum(weight[:, :-1], weight[:, 1:]), np.maximum(weight[:, :-1], weight[:, 1:])
        density_lo, density_hi = np.minimum(density[:, :-1], density[:, 1:]), np.maximum(density[:, :-1], density[:, 1:])
        return np.concatenate([
            (weight_lo * density_lo).sum(axis=0),
            (weight_hi * density_hi).sum(axis=0),
            [weight.min(axis=1).sum(), weight.max(axis=1).sum()],
        ])

    return Helper.chunked_sums(block, 0, words_total, per_block, workers)


def transfer_sandwich(system: FullBranchMap, potential: Potential, depth: int, truncation: int,
                      word_cap: int = None, workers: int = None) -> dict:
    """
    Bounds on P(-q tau - b log|F'|) for an analytic full-branch map, per depth
    m = 1..depth, each the intersection of

    * cylinder sums: sum_v inf_[v] e^{S_m psi} <= e^{mP} <= sum_v sup_[v] e^{S_m psi}
      (conformal measure of the partition into m-cylinders), and
    * ratio bounds: c rho <= L^m rho <= C rho on the image implies
      log c <= mP <= log C, with rho the reference density.

    Words with a letter above N are covered in the upper bounds by
    (U + T)^m - U^m.
    """
    word_cap = word_cap or Config.WORD_CAP
    workers = workers or Config.WORKERS
    n_letters = system.truncation_limit(truncation)
    if n_letters ** depth > word_cap:
        raise WordCountOverflowError(n_letters ** depth, word_cap)

    inside, tail_sup, tail_inf = _tail_terms(system, potential, n_letters)
    grid = np.linspace(system.image_interval[0], system.image_interval[1], GRID_POINTS + 1)
    rho = system.reference_density(grid)
    rho_lo, rho_hi = np.minimum(rho[:-1], rho[1:]), np.maximum(rho[:-1], rho[1:])
    rho_max = float(rho.max())

    history = []
    lower_best, upper_best = -math.inf, math.inf
    for m in range(1, depth + 1):
        sums = _depth_sums(system, potential, m, n_letters, grid, workers)
        cells = GRID_POINTS
        ratio_lo, ratio_hi = sums[:cells], sums[cells:2 * cells]
        z_inf, z_sup = sums[-2], sums[-1]
        # words using a letter above N: (U+T)^m - U^m, bounded via sup over 1-cylinders
        outside = inside ** m * math.expm1(m * math.log1p(tail_sup / inside)) if tail_sup > 0 else 0.0

        lower_m = max(_log(np.min(ratio_lo / rho_hi)), _log(z_inf)) / m
        upper_m = min(_log(np.max((ratio_hi + rho_max * outside) / rho_lo)), _log(z_sup + outside)) / m
        lower_best, upper_best = max(lower_best, lower_m), min(upper_best, upper_m)
        history.append((m, lower_m, upper_m))
        log_event("cylinder_depth", system=system.name, q=potential.q, b=potential.b, depth=m,
                  N=n_letters, lower=lower_m, upper=upper_m)
    return {"lower": lower_best, "upper": upper_best, "history": history,
            "truncation_N": n_letters, "tail_bound": tail_sup, "tail_lower": tail_inf}
