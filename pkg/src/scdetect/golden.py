"""Golden-section search for one-dimensional concave maximization."""

from __future__ import annotations

import math

__all__ = ["maximize_golden"]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1/phi
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0  # 1/phi^2


def maximize_golden(f, lo: float, hi: float, tol: float = 1e-9):
    """Maximize a unimodal (e.g. concave) ``f`` on [lo, hi].

    Returns ``(x_star, f(x_star))`` with ``x_star`` located to absolute
    tolerance ``tol``.  Function evaluations are reused between
    iterations, so the cost is one call per bracket shrink.
    """
    if hi < lo:
        raise ValueError(f"invalid bracket [{lo}, {hi}]")
    span = hi - lo
    if span <= tol:
        x = 0.5 * (lo + hi)
        return x, f(x)

    c = lo + _INVPHI2 * span
    d = lo + _INVPHI * span
    fc = f(c)
    fd = f(d)
    n_steps = int(math.ceil(math.log(tol / span) / math.log(_INVPHI)))
    for _ in range(n_steps):
        if fc > fd:
            hi, d, fd = d, c, fc
            span = hi - lo
            c = lo + _INVPHI2 * span
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            span = hi - lo
            d = lo + _INVPHI * span
            fd = f(d)
    x = 0.5 * (lo + hi)
    return x, f(x)
