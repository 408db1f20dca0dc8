"""Terminal boundary values for valuation: delta read-outs, step (insurance
style) and call-analog payoffs.

Delta payoffs value the transition density itself, so their results carry
density units (1/state-volume); the is_density tag travels with valuation
results to keep the two kinds of numbers from being mixed up.
"""

from dataclasses import dataclass

import numpy as np

from .pde import mollified_delta


@dataclass(frozen=True)
class DeltaPayoff:
    """Density read-out at terminal coordinates, one per axis."""

    points: tuple

    kind = "delta"
    is_density = True

    @property
    def n_axes(self):
        return len(self.points)

    def terminal_values(self, states):
        raise ValueError(
            "delta payoffs have no pointwise terminal values; they are "
            "estimated by kernel density (MC) or mollification (PDE)"
        )

    def terminal_field(self, grid):
        return mollified_delta(grid, self.points)


@dataclass(frozen=True)
class StepPayoff:
    """Indicator payoff: 1 when every axis is on the chosen side."""

    thresholds: tuple
    direction: str = "above"

    kind = "step"
    is_density = False

    def __post_init__(self):
        if self.direction not in ("above", "below"):
            raise ValueError(f"direction must be above|below, got {self.direction!r}")

    @property
    def n_axes(self):
        return len(self.thresholds)

    def terminal_values(self, states):
        s = np.atleast_1d(np.asarray(states, dtype=np.float64))
        if s.ndim == 1:
            s = s[:, None]
        a = np.asarray(self.thresholds)
        hit = (s > a) if self.direction == "above" else (s < a)
        return np.all(hit, axis=-1).astype(np.float64)

    def terminal_field(self, grid):
        fields = []
        for ax, a in zip(grid.axes, self.thresholds):
            c = ax.centers
            fields.append(((c > a) if self.direction == "above" else (c < a))
                          .astype(np.float64))
        if grid.ndim == 1:
            return fields[0]
        return np.outer(fields[0], fields[1])


@dataclass(frozen=True)
class CallPayoff:
    """Sum of per-axis call parts: sum_a max(s_a - K_a, 0)."""

    strikes: tuple

    kind = "call"
    is_density = False

    @property
    def n_axes(self):
        return len(self.strikes)

    def terminal_values(self, states):
        s = np.atleast_1d(np.asarray(states, dtype=np.float64))
        if s.ndim == 1:
            s = s[:, None]
        k = np.asarray(self.strikes)
        return np.maximum(s - k, 0.0).sum(axis=-1)

    def terminal_field(self, grid):
        parts = [np.maximum(ax.centers - k, 0.0)
                 for ax, k in zip(grid.axes, self.strikes)]
        if grid.ndim == 1:
            return parts[0]
        return parts[0][:, None] + parts[1][None, :]
