import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np


class Helper:
    """
    Generic helper functions used across the toolkit.
    """

    # ---------------------------
    # Number formatting
    # ---------------------------
    @staticmethod
    def fmt(value) -> str:
        """Round-trip safe text for a float (17 significant digits)."""
        if isinstance(value, (float, np.floating)):
            return f"{float(value):.17g}"
        return str(value)

    # ---------------------------
    # key=value blocks
    # ---------------------------
    @staticmethod
    def parse_key_value_lines(text: str) -> dict:
        """
        Parses plain-text key=value lines. Blank lines and '#' comments are
        skipped; later keys override earlier ones.

        Example:
        "system=gauss\\nr=2" -> {"system": "gauss", "r": "2"}
        """
        result = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {number}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            result[key.strip()] = value.strip()
        return result

    @staticmethod
    def to_key_value_lines(data: dict) -> str:
        return "\n".join(f"{key}={Helper.fmt(value)}" for key, value in data.items()) + "\n"

    @staticmethod
    def parse_number(text: str):
        """'2' -> 2, '0.5' -> 0.5, '1e5' -> 100000.0"""
        try:
            return int(text)
        except ValueError:
            return float(text)

    # ---------------------------
    # Grids
    # ---------------------------
    @staticmethod
    def geometric_grid(lo: float, hi: float, count: int) -> np.ndarray:
        if count < 2 or not (0 < lo < hi):
            raise ValueError(f"geometric grid needs 0 < lo < hi and count >= 2, got {lo}, {hi}, {count}")
        grid = np.geomspace(lo, hi, count)
        grid[0], grid[-1] = lo, hi
        return grid

    # ---------------------------
    # Deterministic chunked reduction
    # ---------------------------
    @staticmethod
    def chunk_bounds(start: int, stop: int, chunk_size: int) -> list:
        """
        Splits [start, stop) into fixed-size chunks. The boundaries depend
        only on the range and chunk size, never on the worker count.
        """
        return [(lo, min(lo + chunk_size, stop)) for lo in range(start, stop, chunk_size)]

    @staticmethod
    def ordered_map(fn, items: list, workers: int = 1) -> list:
        """Maps fn over items, returning results in item order."""
        if workers <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    @staticmethod
    def chunked_sums(fn, start: int, stop: int, chunk_size: int, workers: int = 1) -> np.ndarray:
        """
        Applies fn(lo, hi) -> vector of partial sums to each chunk and reduces
        the partial vectors in chunk order with fsum, so the result is
        byte-identical for any worker count.
        """
        bounds = Helper.chunk_bounds(start, stop, chunk_size)
        if not bounds:
            return None
        partials = Helper.ordered_map(lambda b: np.asarray(fn(*b), dtype=float), bounds, workers)
        stacked = np.vstack(partials)
        return np.array([math.fsum(stacked[:, k]) for k in range(stacked.shape[1])])
