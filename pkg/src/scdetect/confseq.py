"""Confidence sequences for the mean of [0, 1]-valued observations.

Two families are provided, both exposed as nested interval sequences:

* a betting CS that tracks, for every candidate mean ``s`` on a uniform
  grid, the wealth of a gambler betting against ``mean = s``, and keeps
  the candidates whose wealth stays below ``1/alpha``;
* a closed-form Hoeffding-style CS with a fixed bet size, used as a
  simple baseline with an explicit width formula.

Intervals only ever shrink: each update intersects the new grid-level
hull with the previously reported interval, so the sequences are nested
by construction.

Most of the arithmetic lives in "banks", which update many confidence
sequences in lockstep as rows of shared arrays.  The single-CS classes
wrap a bank of size one, so a standalone CS and a CS inside the change
detector follow byte-identical update paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence, Union

import numpy as np

from .errors import ConfigError, DataDomainError
from .golden import maximize_golden
from .intervals import ParamInterval

__all__ = [
    "CsConfig",
    "BettingCs",
    "HoeffdingCs",
    "new_cs",
    "update_cs",
    "cs_interval",
    "hoeffding_update",
    "bet_next",
    "width_envelope",
    "hoeffding_halfwidth",
    "z_stat",
    "mixture_component_bets",
]

# Log-wealth floor: below this, exp() underflows to zero anyway.
LOG_WEALTH_FLOOR = -745.0
# Stand-in for the infinite bet bound at the grid endpoints s in {0, 1}.
ENDPOINT_BET_CAP = 1e6
# Adaptive bets stay at 90% of the admissible range so the per-step
# wealth factor 1 + lambda (x - s) is bounded away from zero.
NEWTON_BET_SCALE = 0.9


@dataclass(frozen=True)
class CsConfig:
    """Parameters shared by every CS this package constructs."""

    alpha: float
    family: Literal["betting", "hoeffding"] = "betting"
    grid_size: int = 101
    strategy: Literal["mixture", "newton"] = "mixture"
    mixture_bets: int = 5
    hoeffding_lambda0: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.family not in ("betting", "hoeffding"):
            raise ConfigError(f"unknown CS family {self.family!r}")
        if self.grid_size < 3:
            raise ConfigError(f"grid_size must be >= 3, got {self.grid_size}")
        if self.strategy not in ("mixture", "newton"):
            raise ConfigError(f"unknown betting strategy {self.strategy!r}")
        if self.mixture_bets < 1:
            raise ConfigError(f"mixture_bets must be >= 1, got {self.mixture_bets}")
        if not (0.0 < self.hoeffding_lambda0 < 2.0):
            raise ConfigError(
                f"hoeffding_lambda0 must be in (0, 2), got {self.hoeffding_lambda0}"
            )


def _check_obs(x: float) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0) or math.isnan(x):
        raise DataDomainError(f"observation {x} outside [0, 1]")
    return x


def _bet_range(grid: np.ndarray):
    """Admissible bet magnitudes per candidate mean.

    A bet lambda against candidate ``s`` must lie in [-1/(1-s), 1/s];
    the unbounded side at s in {0, 1} is capped at a large finite value.
    Returns ``(down, up)`` with the bet range being [-down, up].
    """
    with np.errstate(divide="ignore"):
        up = np.where(grid > 0.0, 1.0 / np.maximum(grid, 1e-300), ENDPOINT_BET_CAP)
        down = np.where(
            grid < 1.0, 1.0 / np.maximum(1.0 - grid, 1e-300), ENDPOINT_BET_CAP
        )
    return np.minimum(down, ENDPOINT_BET_CAP), np.minimum(up, ENDPOINT_BET_CAP)


def mixture_component_bets(grid: np.ndarray, k: int) -> np.ndarray:
    """Constant component bets of the grid-mixture strategy.

    For each candidate mean the admissible bet range is split into ``k``
    equal cells and the cell midpoints are used as bets, e.g. two
    components at s = 0.5 bet {-1, +1}.  Midpoints keep every wealth
    factor strictly positive.
    """
    down, up = _bet_range(np.asarray(grid, dtype=float))
    lo = -down
    cell = (up - lo) / k
    offsets = (np.arange(k) + 0.5)[None, :]
    return lo[:, None] + offsets * cell[:, None]


class BettingBank:
    """A batch of betting confidence sequences updated in lockstep.

    Rows are independent CSs (different start times); every ``update``
    feeds the same observation to all of them.  Used directly by the
    detector; ``BettingCs`` wraps a bank of size one.
    """

    def __init__(self, config: CsConfig, bets: np.ndarray | None = None):
        if config.family != "betting":
            raise ConfigError("BettingBank requires a betting-family config")
        self.config = config
        g = config.grid_size
        self.grid = np.linspace(0.0, 1.0, g)
        self.spacing = 1.0 / (g - 1)
        # exclusion threshold on log wealth
        self._thresh = math.log(1.0 / config.alpha)
        self._newton = config.strategy == "newton" and bets is None
        if self._newton:
            down, up = _bet_range(self.grid)
            self._lam_lo = -NEWTON_BET_SCALE * down
            self._lam_hi = NEWTON_BET_SCALE * up
            self._k = 1
        else:
            if bets is None:
                bets = mixture_component_bets(self.grid, config.mixture_bets)
            bets = np.atleast_2d(np.asarray(bets, dtype=float))
            if bets.shape[0] != g:
                raise ConfigError(
                    f"bets must have one row per grid point, got {bets.shape}"
                )
            self.bets = bets
            self._k = bets.shape[1]
            self._logk = math.log(self._k)
            self._delta_cache: dict[float, np.ndarray] = {}
        self.size = 0
        self._cap = 0
        self._alloc(8)

    def _alloc(self, cap: int):
        g = self.config.grid_size

        def grow(old, shape):
            new = np.empty(shape)
            if old is not None:
                new[: self.size] = old[: self.size]
            return new

        if self._newton:
            self._lw = grow(getattr(self, "_lw", None), (cap, g))
            self._lam = grow(getattr(self, "_lam", None), (cap, g))
            self._acc = grow(getattr(self, "_acc", None), (cap, g))
        else:
            self._lw = grow(getattr(self, "_lw", None), (cap, g, self._k))
        self._lo = grow(getattr(self, "_lo", None), (cap,))
        self._hi = grow(getattr(self, "_hi", None), (cap,))
        inew = np.empty(cap, dtype=np.int64)
        for name in ("_start", "_nloc"):
            old = getattr(self, name, None)
            arr = inew.copy()
            if old is not None:
                arr[: self.size] = old[: self.size]
            setattr(self, name, arr)
        self._cap = cap

    def spawn(self, start_index: int) -> int:
        """Add a fresh CS (wealth 1 everywhere, interval [0, 1])."""
        if start_index < 1:
            raise ConfigError(f"start_index must be >= 1, got {start_index}")
        if self.size == self._cap:
            self._alloc(2 * self._cap)
        i = self.size
        self._lw[i] = 0.0
        if self._newton:
            self._lam[i] = 0.0
            self._acc[i] = 1.0
        self._lo[i] = 0.0
        self._hi[i] = 1.0
        self._start[i] = start_index
        self._nloc[i] = 0
        self.size += 1
        return i

    def update(self, x: float) -> None:
        """Feed one observation to every CS in the bank."""
        x = _check_obs(x)
        m = self.size
        if m == 0:
            return
        if self._newton:
            included = self._update_newton(x)
        else:
            included = self._update_mixture(x)
        self._apply_hull(included)
        self._nloc[:m] += 1

    def _update_mixture(self, x: float) -> np.ndarray:
        delta = self._delta_cache.get(x)
        if delta is None:
            delta = np.log1p(self.bets * (x - self.grid)[:, None])
            if len(self._delta_cache) < 16:
                self._delta_cache[x] = delta
        lw = self._lw[: self.size]
        lw += delta
        np.maximum(lw, LOG_WEALTH_FLOOR, out=lw)
        # Mixture wealth is the average of component wealths; compare
        # logsumexp(lw) - log k against the threshold.  The cheap
        # component max brackets logsumexp within log k, so the exact
        # value is only needed in a narrow band.
        mx = lw.max(axis=2)
        hi_cut = self._thresh + self._logk
        excluded = mx >= hi_cut
        band = (mx >= self._thresh) & ~excluded
        if band.any():
            sub = lw[band]  # (B, k)
            m2 = sub.max(axis=1)
            lse = m2 + np.log(np.exp(sub - m2[:, None]).sum(axis=1))
            excluded[band] = lse >= hi_cut
        return ~excluded

    def _update_newton(self, x: float) -> np.ndarray:
        m = self.size
        w = x - self.grid
        lam = self._lam[:m]
        acc = self._acc[:m]
        lw = self._lw[:m]
        denom = 1.0 + lam * w
        lw += np.log(denom)
        np.maximum(lw, LOG_WEALTH_FLOOR, out=lw)
        g = -w / denom
        acc += g * g
        lam -= g / acc
        np.clip(lam, self._lam_lo, self._lam_hi, out=lam)
        return lw < self._thresh

    def _apply_hull(self, included: np.ndarray) -> None:
        """Intersect each CS with the (expanded) hull of its raw grid set."""
        m = self.size
        gsz = self.config.grid_size
        any_inc = included.any(axis=1)
        j_lo = included.argmax(axis=1)
        j_hi = gsz - 1 - included[:, ::-1].argmax(axis=1)
        # One grid spacing of slack on each side so that a true mean
        # between grid points is never excluded by discretization.
        new_lo = np.where(
            any_inc, np.maximum(self.grid[j_lo] - self.spacing, 0.0), 1.0
        )
        new_hi = np.where(
            any_inc, np.minimum(self.grid[j_hi] + self.spacing, 1.0), 0.0
        )
        np.maximum(self._lo[:m], new_lo, out=self._lo[:m])
        np.minimum(self._hi[:m], new_hi, out=self._hi[:m])

    def keep_rows(self, keep: np.ndarray) -> None:
        """Compact the bank to the rows flagged in ``keep`` (order kept)."""
        m = self.size
        n_new = int(keep.sum())
        self._lw[:n_new] = self._lw[:m][keep]
        if self._newton:
            self._lam[:n_new] = self._lam[:m][keep]
            self._acc[:n_new] = self._acc[:m][keep]
        for name in ("_lo", "_hi", "_start", "_nloc"):
            arr = getattr(self, name)
            arr[:n_new] = arr[:m][keep]
        self.size = n_new

    # -- read access ----------------------------------------------------

    @property
    def lowers(self) -> np.ndarray:
        return self._lo[: self.size]

    @property
    def uppers(self) -> np.ndarray:
        return self._hi[: self.size]

    @property
    def start_indices(self) -> np.ndarray:
        return self._start[: self.size]

    @property
    def n_locals(self) -> np.ndarray:
        return self._nloc[: self.size]

    def interval(self, row: int = 0) -> ParamInterval:
        lo, hi = float(self._lo[row]), float(self._hi[row])
        if lo > hi:
            return ParamInterval(1.0, 0.0)
        return ParamInterval(lo, hi)

    def log_wealth(self, row: int = 0) -> np.ndarray:
        """Per-grid-point log wealth (mixture-averaged where applicable)."""
        if self._newton:
            return self._lw[row].copy()
        lw = self._lw[row]
        mx = lw.max(axis=1)
        return mx + np.log(np.exp(lw - mx[:, None]).sum(axis=1)) - self._logk

    def component_log_wealth(self, row: int = 0) -> np.ndarray:
        if self._newton:
            raise ConfigError("newton strategy has no mixture components")
        return self._lw[row].copy()

    def next_bets(self, row: int = 0) -> np.ndarray:
        """Bets that will be applied to the next observation.

        Mixture: the constant component bets, shape (grid, k).
        Newton: the current adaptive bet per grid point, shape (grid,).
        """
        if self._newton:
            return self._lam[row].copy()
        return self.bets.copy()


class HoeffdingBank:
    """A batch of fixed-bet Hoeffding confidence sequences."""

    def __init__(self, config: CsConfig):
        if config.family != "hoeffding":
            raise ConfigError("HoeffdingBank requires a hoeffding-family config")
        self.config = config
        self._lam0 = config.hoeffding_lambda0
        self._log2a = math.log(2.0 / config.alpha)
        self.size = 0
        self._cap = 8
        self._sum = np.empty(self._cap)
        self._lo = np.empty(self._cap)
        self._hi = np.empty(self._cap)
        self._start = np.empty(self._cap, dtype=np.int64)
        self._nloc = np.empty(self._cap, dtype=np.int64)

    def _grow(self):
        cap = 2 * self._cap
        for name in ("_sum", "_lo", "_hi", "_start", "_nloc"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)
        self._cap = cap

    def spawn(self, start_index: int) -> int:
        if start_index < 1:
            raise ConfigError(f"start_index must be >= 1, got {start_index}")
        if self.size == self._cap:
            self._grow()
        i = self.size
        self._sum[i] = 0.0
        self._lo[i] = 0.0
        self._hi[i] = 1.0
        self._start[i] = start_index
        self._nloc[i] = 0
        self.size += 1
        return i

    def update(self, x: float) -> None:
        x = _check_obs(x)
        m = self.size
        if m == 0:
            return
        self._nloc[:m] += 1
        self._sum[:m] += x
        n = self._nloc[:m].astype(float)
        xbar = self._sum[:m] / n
        h = (self._log2a + n * self._lam0 ** 2 / 8.0) / (n * self._lam0)
        np.maximum(self._lo[:m], np.maximum(xbar - h, 0.0), out=self._lo[:m])
        np.minimum(self._hi[:m], np.minimum(xbar + h, 1.0), out=self._hi[:m])

    def keep_rows(self, keep: np.ndarray) -> None:
        m = self.size
        n_new = int(keep.sum())
        for name in ("_sum", "_lo", "_hi", "_start", "_nloc"):
            arr = getattr(self, name)
            arr[:n_new] = arr[:m][keep]
        self.size = n_new

    @property
    def lowers(self) -> np.ndarray:
        return self._lo[: self.size]

    @property
    def uppers(self) -> np.ndarray:
        return self._hi[: self.size]

    @property
    def start_indices(self) -> np.ndarray:
        return self._start[: self.size]

    @property
    def n_locals(self) -> np.ndarray:
        return self._nloc[: self.size]

    def interval(self, row: int = 0) -> ParamInterval:
        lo, hi = float(self._lo[row]), float(self._hi[row])
        if lo > hi:
            return ParamInterval(1.0, 0.0)
        return ParamInterval(lo, hi)


def make_bank(config: CsConfig) -> Union[BettingBank, HoeffdingBank]:
    if config.family == "betting":
        return BettingBank(config)
    return HoeffdingBank(config)


class _SingleCs:
    """Shared wrapper: one CS as a bank of size one."""

    _bank: Union[BettingBank, HoeffdingBank]

    def __init__(self, config: CsConfig, start_index: int = 1):
        self.config = config
        self._bank = make_bank(config)
        self._bank.spawn(start_index)

    def update(self, x: float):
        self._bank.update(x)
        return self

    def interval(self) -> ParamInterval:
        return self._bank.interval(0)

    @property
    def start_index(self) -> int:
        return int(self._bank.start_indices[0])

    @property
    def n_local(self) -> int:
        return int(self._bank.n_locals[0])


class BettingCs(_SingleCs):
    """One betting CS; see the module docstring for semantics."""

    def __init__(self, config: CsConfig, start_index: int = 1,
                 bets: np.ndarray | None = None):
        if config.family != "betting":
            raise ConfigError("BettingCs requires family='betting'")
        self.config = config
        self._bank = BettingBank(config, bets=bets)
        self._bank.spawn(start_index)

    def log_wealth(self) -> np.ndarray:
        return self._bank.log_wealth(0)

    def next_bets(self) -> np.ndarray:
        return self._bank.next_bets(0)

    @property
    def grid(self) -> np.ndarray:
        return self._bank.grid


class HoeffdingCs(_SingleCs):
    """One fixed-bet Hoeffding CS."""

    def __init__(self, config: CsConfig, start_index: int = 1):
        if config.family != "hoeffding":
            raise ConfigError("HoeffdingCs requires family='hoeffding'")
        super().__init__(config, start_index)

    @property
    def running_sum(self) -> float:
        return float(self._bank._sum[0])


def new_cs(config: CsConfig, start_index: int = 1):
    """Create a fresh CS of the configured family, interval [0, 1]."""
    if config.family == "betting":
        return BettingCs(config, start_index)
    return HoeffdingCs(config, start_index)


def update_cs(state, x: float):
    """Feed one observation; the reported interval can only shrink."""
    return state.update(x)


def cs_interval(state) -> ParamInterval:
    """Current running-intersection interval of the CS."""
    return state.interval()


def hoeffding_update(state: HoeffdingCs, x: float) -> HoeffdingCs:
    if not isinstance(state, HoeffdingCs):
        raise ConfigError("hoeffding_update requires a HoeffdingCs state")
    return state.update(x)


def bet_next(state: BettingCs, s: float) -> np.ndarray:
    """Bets the CS will place against candidate mean ``s`` next step.

    ``s`` must be a grid point.  Mixture strategies return the constant
    component bets (shape (k,)); the adaptive strategy returns the
    current scalar bet, which depends only on past observations.
    """
    grid = state.grid
    j = int(round(s * (len(grid) - 1)))
    if not (0 <= j < len(grid)) or abs(grid[j] - s) > 1e-9:
        raise ConfigError(f"s={s} is not a grid point of this CS")
    bets = state.next_bets()
    return bets[j]


def hoeffding_halfwidth(n: int, alpha: float, lambda0: float) -> float:
    """Half-width of the fixed-bet Hoeffding CS after ``n`` observations."""
    return (math.log(2.0 / alpha) + n * lambda0 ** 2 / 8.0) / (n * lambda0)


def width_envelope(
    family: str, n: int, alpha: float, *, hoeffding_lambda0: float = 0.5
) -> float:
    """Deterministic upper bound on the CS width after ``n`` observations.

    The betting value is 4*sqrt(log(n/alpha)/n), which vanishes as n
    grows.  Both families are clipped at 1 (the parameter space
    diameter) and are nonincreasing once below it.  Note the fixed-bet
    Hoeffding envelope 2*h_n converges to lambda0/4 rather than to 0: a
    fixed bet cannot resolve arbitrarily small deviations, which also
    bounds the change magnitudes its detector variant can see.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if family == "betting":
        return min(1.0, 4.0 * math.sqrt(math.log(n / alpha) / n))
    if family == "hoeffding":
        return min(1.0, 2.0 * hoeffding_halfwidth(n, alpha, hoeffding_lambda0))
    raise ConfigError(f"unknown CS family {family!r}")


def z_stat(xs: Sequence[float], theta: float, *, tol: float = 1e-9) -> float:
    """Best achievable log wealth against candidate mean ``theta``.

    Maximizes sum(log(1 + lambda*(theta - x_t))) over one-sided bets
    lambda in [0, 1/(1-theta)), by golden-section search (the objective
    is concave).  Monotone nondecreasing in theta.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise DataDomainError("z_stat requires at least one observation")
    if np.any((xs < 0.0) | (xs > 1.0)):
        raise DataDomainError("observations must lie in [0, 1]")
    if not (0.0 < theta < 1.0):
        raise DataDomainError(f"theta must be in (0, 1), got {theta}")
    diffs = theta - xs
    hi = 1.0 / (1.0 - theta) - 1e-9

    def objective(lam: float) -> float:
        return float(np.log1p(lam * diffs).sum())

    _, val = maximize_golden(objective, 0.0, hi, tol=tol)
    return max(val, 0.0)
