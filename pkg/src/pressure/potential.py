from dataclasses import dataclass


@dataclass(frozen=True)
class Potential:
    """
    The potential q(alpha - tau) - b log|F'|, stored as (q, b, alpha).

    alpha = 0 gives the plain potential -q tau - b log|F'|; a nonzero alpha
    only shifts the pressure by q * alpha.
    """
    q: float
    b: float
    alpha: float = 0.0

    @property
    def shift(self) -> float:
        return self.q * self.alpha

    def in_domain(self, b_star: float) -> bool:
        """(q, b) in ({0} x [b*, inf)) u ((0, inf) x [0, inf))."""
        if self.q > 0:
            return self.b >= 0
        return self.q == 0 and self.b >= b_star
