import math

import numpy as np

from src.systems.branches import FullBranchMap
from src.utils.logger import log_event

PARTITION_SLACK = 1e-12


# ---------------------------
# Words and cylinders
# ---------------------------
def word_block(n_letters: int, depth: int, lo: int, hi: int) -> np.ndarray:
    """
    Words number lo..hi-1 (lexicographic, letters 1..n_letters) as an
    integer array of shape (hi - lo, depth).
    """
    index = np.arange(lo, hi, dtype=np.int64)
    words = np.empty((index.size, depth), dtype=np.int64)
    for j in range(depth - 1, -1, -1):
        words[:, j] = index % n_letters + 1
        index //= n_letters
    return words


def cylinder_log_derivatives(system: FullBranchMap, words: np.ndarray) -> dict:
    """
    Bounds on S_n log|F'| over the cylinders of `words` (shape (m, n)), and
    on the first factor log|F'(x)| alone.

    Endpoint evaluation is exact whenever the map's cylinder derivatives are
    monotone (true for the builtins: Moebius branches for Gauss, increasing
    branches for Manneville-Pomeau).
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    if system.locally_constant:
        shells = system.letters_to_shells(words.ravel()).reshape(words.shape)
        table = system.shells(int(shells.max()))
        per_letter = table.log_slope[shells - 1]
        total = per_letter.sum(axis=1)
        first = per_letter[:, 0]
        return {"total_lo": total, "total_hi": total, "first_lo": first, "first_hi": first}

    totals, firsts = [], []
    for t in system.image_interval:
        x = np.full(words.shape[0], float(t))
        total = np.zeros(words.shape[0])
        log_derivative = total
        for j in range(words.shape[1] - 1, -1, -1):
            x, log_derivative = system.inverse_branch(words[:, j], x)
            total = total + log_derivative
        totals.append(total)
        firsts.append(log_derivative)
    return {
        "total_lo": np.minimum(*totals),
        "total_hi": np.maximum(*totals),
        "first_lo": np.minimum(*firsts),
        "first_hi": np.maximum(*firsts),
    }


def cylinder_derivative_bounds(system: FullBranchMap, word) -> tuple:
    """(inf, sup) of S_n log|F'| over the cylinder of a nonempty word."""
    word = [int(a) for a in word]
    if not word:
        raise ValueError("cylinder word must be nonempty")
    if min(word) < 1:
        raise ValueError(f"letters start at 1, got {word}")
    bounds = cylinder_log_derivatives(system, np.array([word]))
    return float(bounds["total_lo"][0]), float(bounds["total_hi"][0])


# ---------------------------
# Structural checks
# ---------------------------
def partition_check(system: FullBranchMap, n: int) -> dict:
    n = system.truncation_limit(n)
    left, right = system.branch_intervals(n)
    order = np.argsort(left)
    left, right = left[order], right[order]
    # endpoints come from separate cumulative sums; rounding below slack is not overlap
    slack = PARTITION_SLACK * system.image_length
    overlaps = int(np.sum(right[:-1] > left[1:] + slack))
    lo, hi = system.image_interval
    outside = int(np.sum((left < lo - slack) | (right > hi + slack)))
    total = math.fsum(right - left)
    passed = overlaps == 0 and outside == 0 and bool(np.all(right > left)) and total <= system.image_length * (1 + 1e-12)
    return {"passed": passed, "branches": n, "overlaps": overlaps, "outside": outside, "total_length": total}


def expansion_check(system: FullBranchMap, n: int) -> dict:
    """
    inf |(F^k)'| over all k-cylinders with letters <= n, k the declared
    expansion iterate, against A**k.
    """
    k = system.expansion_iterate
    n = system.truncation_limit(n)
    words = word_block(n, k, 0, n ** k)
    bounds = cylinder_log_derivatives(system, words)
    worst = float(bounds["total_lo"].min())
    required = k * math.log(system.expansion_constant)
    passed = worst > 0.0 and worst >= required - 1e-12
    log_event("expansion_check", system=system.name, iterate=k, worst_log_derivative=worst, required=required)
    return {"passed": passed, "iterate": k, "worst_log_derivative": worst, "required": required}


def coding_consistency_check(system: FullBranchMap, word) -> dict:
    """
    The bounds for a word must lie inside the sum of the single-letter
    bounds along its shifts.
    """
    inf_word, sup_word = cylinder_derivative_bounds(system, word)
    letter_bounds = [cylinder_derivative_bounds(system, [a]) for a in word]
    inf_sum = math.fsum(lo for lo, _ in letter_bounds)
    sup_sum = math.fsum(hi for _, hi in letter_bounds)
    slack = 1e-12 * max(1.0, abs(sup_sum))
    passed = inf_sum - slack <= inf_word <= sup_word <= sup_sum + slack
    return {"passed": passed, "word": list(word), "inf": inf_word, "sup": sup_word,
            "inf_letters": inf_sum, "sup_letters": sup_sum}


def non_integrability_check(system: FullBranchMap, n: int, threshold: float = 10.0) -> dict:
    """Partial sums of tau_a mu([a]) over shells 1..n must exceed the threshold."""
    table = system.shells(n)
    terms = table.count * table.tau * table.measure
    partial = np.cumsum(terms)
    checkpoints = [table.size // 4, table.size // 2, table.size]
    values = [float(partial[max(c, 1) - 1]) for c in checkpoints]
    increasing = all(a < b for a, b in zip(values, values[1:]))
    return {"passed": values[-1] > threshold and increasing, "shells": table.size,
            "partial_sums": values, "threshold": threshold}
