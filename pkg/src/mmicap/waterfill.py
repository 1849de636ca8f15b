"""Water-filling allocation of a squared-Frobenius weight budget.

The capacity problem reduces to  sup sum_i log(a_i + f_i)  over allocations
a_i >= 0 with sum a_i <= F, where f_i = noise_var / eigenvalue_i are
per-component floors.  A common water level fills every component whose
floor lies below it; the budgets at which successive components enter the
active set are the breakpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, NegativeBudget
from .spectrum import Spectrum, _frozen_array


@dataclass(frozen=True)
class Breakpoints:
    """Budgets at which component k = 1..n enters the active set.

    The sequence starts at exactly zero and is non-decreasing.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen_array(self.values))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class WaterfillSolution:
    """Solved allocation at one budget.

    active_count is the number of strictly positive allocations.  It equals
    the regime's active-set size except exactly at a breakpoint (including
    budget 0), where the entering component still holds a zero allocation.
    """

    water_level: float
    allocations: np.ndarray
    active_count: int
    budget_used: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "allocations", _frozen_array(self.allocations))


def _floors(spectrum: Spectrum, noise_var: float, count: int) -> np.ndarray:
    if noise_var <= 0.0:
        raise ValueError("noise_var must be positive")
    return noise_var / spectrum.values[:count]


def breakpoints(spectrum: Spectrum, noise_var: float, n_tilde: int) -> Breakpoints:
    """Full breakpoint sequence for the leading ``n_tilde`` components.

    Computed through the cumulative form
        rho_1 = 0,   rho_{k+1} = rho_k + k * (f_{k+1} - f_k)
    whose increments are non-negative even in floating point, so the
    returned sequence is non-decreasing bit-for-bit and starts at exactly 0.
    The closed form is noise_var * (k / lambda_k - sum_{i<=k} 1 / lambda_i).
    """
    if not 1 <= n_tilde <= len(spectrum):
        raise IndexOutOfRange(f"n_tilde {n_tilde} outside [1, {len(spectrum)}]")
    floors = _floors(spectrum, noise_var, n_tilde)
    steps = np.arange(1, n_tilde, dtype=np.float64) * np.diff(floors)
    rho = np.concatenate(([0.0], np.cumsum(steps)))
    return Breakpoints(rho)


def breakpoint_value(spectrum: Spectrum, noise_var: float, k: int) -> float:
    """The budget at which component ``k`` (1-based) enters the active set."""
    if not 1 <= k <= len(spectrum):
        raise IndexOutOfRange(f"component index {k} outside [1, {len(spectrum)}]")
    return float(breakpoints(spectrum, noise_var, k).values[-1])


def regime(budget: float, bp: Breakpoints) -> int:
    """Number of trailing components excluded from the active set.

    Returns the smallest K >= 0 with budget >= breakpoint[n - K]; ties use
    exact floating comparison and resolve toward the larger active set (the
    adjacent capacity branches agree at every breakpoint, so the choice
    never changes the value).
    """
    if budget < 0.0:
        raise NegativeBudget(f"budget must be non-negative, got {budget}")
    n = len(bp)
    return n - int(np.searchsorted(bp.values, budget, side="right"))


def solve_waterfill(budget: float, spectrum: Spectrum, noise_var: float,
                    n_tilde: int) -> WaterfillSolution:
    """Optimal allocation of ``budget`` across the leading components.

    The water level is (budget + sum of active floors) / active_set_size and
    each allocation is max(0, level - floor).  Allocations are evaluated via
    pairwise floor differences, which avoids the cancellation in
    (level - floor) when the budget is tiny against the floor scale, keeping
    the budget exactly saturated to ~1e-13 relative.
    """
    bp = breakpoints(spectrum, noise_var, n_tilde)
    excluded = regime(budget, bp)
    active = n_tilde - excluded
    floors = _floors(spectrum, noise_var, n_tilde)

    if budget == 0.0:
        level = float(floors[0])
        alloc = np.zeros(n_tilde)
    else:
        level = (budget + float(np.sum(floors[:active]))) / active
        # sum_{j in active} (f_j - f_i) == active * (level - f_i) - budget
        slack = np.sum(floors[:active][None, :] - floors[:, None], axis=1)
        alloc = np.maximum(0.0, (budget + slack) / active)

    return WaterfillSolution(
        water_level=level,
        allocations=alloc,
        active_count=int(np.count_nonzero(alloc > 0.0)),
        budget_used=float(np.sum(alloc)),
    )
