"""Discrete-time delta-hedging replication simulator.

The hedged book holds the claim, short delta units of each asset, and a
financing account that absorbs every rebalancing cash flow and accrues at
the chosen rate r.  If the valuation model is right, the book grows like
d(Pi) = r*Pi*dt regardless of the physical drift (the hedge eliminates it);
the terminal replication error measures how well discrete rebalancing
achieves that.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import pde
from .models import (
    QubitParams,
    RiskNeutralSpec,
    ShoParams,
    qubit_physical_dynamics,
    qubit_risk_neutral_dynamics,
    sho_axis_dynamics,
    sho_physical_dynamics,
    sho_risk_neutral_dynamics,
)
from .payoffs import DeltaPayoff
from .sde import TimeSchedule, simulate_ensemble
from .valuation import closed_form_values_sho, pde_value_fields


@dataclass
class HedgeLedger:
    """Per-path time series of one replication run.

    portfolio[0] equals option_values[0] - deltas[0] . states[0] exactly
    (the financing account starts empty); terminal_error is
    portfolio[-1] - portfolio[0] * exp(r * (T - t0)).
    """

    schedule: TimeSchedule
    path_index: int
    states: np.ndarray         # (n_steps+1, axes)
    option_values: np.ndarray  # (n_steps+1,)
    deltas: np.ndarray         # (n_steps+1, axes)
    portfolio: np.ndarray      # (n_steps+1,)
    financing: np.ndarray      # (n_steps+1,)
    terminal_error: float
    absorbed_step: int = -1


@dataclass
class ReplicationReport:
    n_paths: int
    mean_error: float
    mean_error_se: float
    rms_error: float
    worst_error: float
    worst_path: int
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray

    def to_json_dict(self):
        return {
            "n_paths": self.n_paths,
            "mean_error": self.mean_error,
            "mean_error_se": self.mean_error_se,
            "rms_error": self.rms_error,
            "worst_error": self.worst_error,
            "worst_path": self.worst_path,
            "histogram_edges": [float(e) for e in self.histogram_edges],
            "histogram_counts": [int(c) for c in self.histogram_counts],
        }


def portfolio_value(f_value, deltas, state):
    """Pi = f - sum_i Delta_i * s_i."""
    deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
    state = np.atleast_1d(np.asarray(state, dtype=np.float64))
    if deltas.shape != state.shape:
        raise ValueError("deltas and state must have the same length")
    return float(f_value) - float(np.dot(deltas, state))


def _path_dynamics(model, rn, axes, measure):
    if isinstance(model, QubitParams):
        if axes != 1:
            raise ValueError("qubit hedging is one-dimensional")
        return (qubit_physical_dynamics(model) if measure == "physical"
                else qubit_risk_neutral_dynamics(model, rn))
    if isinstance(model, ShoParams):
        mode = "physical" if measure == "physical" else "risk_neutral"
        if axes == 1:
            return sho_axis_dynamics(model, mode=mode, r=rn.r)
        if axes == 2:
            return (sho_physical_dynamics(model) if measure == "physical"
                    else sho_risk_neutral_dynamics(model, rn))
        raise ValueError("hedging supports at most 2 axes")
    raise TypeError(f"unsupported model {type(model).__name__}")


class _ClosedFormValuer:
    """Vectorized value/delta provider from the closed-form route."""

    def __init__(self, model, rn, payoff, bump):
        if not isinstance(model, ShoParams):
            raise ValueError("closed_form hedging exists only for the sho model")
        self.model = model
        self.rn = rn
        self.payoff = payoff
        self.bump = bump

    def values(self, t, states):
        return closed_form_values_sho(self.model, self.rn, self.payoff, states, t)

    def deltas(self, t, states):
        out = np.empty_like(states)
        for a in range(states.shape[1]):
            up = states.copy()
            dn = states.copy()
            up[:, a] += self.bump
            dn[:, a] -= self.bump
            out[:, a] = (self.values(t, up) - self.values(t, dn)) / (2 * self.bump)
        return out


class _PdeValuer:
    """Value/delta provider interpolating precomputed backward-solve fields.

    Deltas come from centered node differences of the solved field (one-sided
    at the edges), which is the grid-native version of the bump derivative
    and stays well defined next to the degenerate qubit boundary.
    """

    def __init__(self, model, rn, payoff, state0, schedule, cells, n_steps):
        times = list(schedule.times())
        # the solver grid must contain every hedge time exactly, so refine the
        # hedge schedule by an integer factor
        if n_steps is None:
            refine = max(1, math.ceil(400 / schedule.n_steps))
        else:
            refine = max(1, math.ceil(n_steps / schedule.n_steps))
        fields, prob = pde_value_fields(model, rn, payoff, state0,
                                        schedule.t0, output_times=times,
                                        cells=cells,
                                        n_steps=refine * schedule.n_steps)
        self.fields = {round(f.time, 12): f for f in fields}
        self.grads = {}
        for f in fields:
            gs = []
            for a, ax in enumerate(prob.grid.axes):
                gs.append(pde.ValueField(
                    grid=f.grid,
                    values=np.gradient(f.values, ax.h, axis=a),
                    time=f.time, discounted=True))
            self.grads[round(f.time, 12)] = gs

    def values(self, t, states):
        return pde.interpolate(self.fields[round(t, 12)], states)

    def deltas(self, t, states):
        gs = self.grads[round(t, 12)]
        out = np.empty_like(states)
        for a, g in enumerate(gs):
            out[:, a] = pde.interpolate(g, states)
        return out


def run_hedge(model, rn: RiskNeutralSpec, payoff, state0,
              schedule: TimeSchedule, n_paths, master_seed,
              value_route="closed_form", measure="physical", bump=1e-4,
              cells=None, pde_steps=None):
    """Simulate discrete delta hedging along physical (or risk-neutral) paths.

    At every schedule step the deltas are recomputed from the risk-neutral
    valuation and the rebalancing cash flows settle into the financing
    account at rate r.  Absorbed qubit paths freeze: their deltas stop
    updating and their option value becomes the discounted payoff of the
    frozen state.  Returns one HedgeLedger per path.
    """
    if isinstance(payoff, DeltaPayoff):
        raise ValueError("delta payoffs are density read-outs, not hedgeable claims")
    if abs(schedule.t_end - rn.T) > 1e-9:
        raise ValueError("schedule must end at the maturity rn.T")
    if measure not in ("physical", "risk_neutral"):
        raise ValueError(f"unknown measure {measure!r}")
    state0 = np.atleast_1d(np.asarray(state0, dtype=np.float64))
    axes = payoff.n_axes
    if state0.shape != (axes,):
        raise ValueError("state0 must supply one coordinate per payoff axis")

    dyn = _path_dynamics(model, rn, axes, measure)
    ens = simulate_ensemble(dyn, state0, schedule, n_paths, master_seed)

    if value_route == "closed_form":
        valuer = _ClosedFormValuer(model, rn, payoff, bump)
    elif value_route == "pde":
        valuer = _PdeValuer(model, rn, payoff, state0, schedule, cells, pde_steps)
    else:
        raise ValueError("value_route must be closed_form or pde "
                         "(MC deltas are too noisy inside the loop)")

    n = schedule.n_steps
    dt = schedule.dt
    r = rn.r
    growth = math.exp(r * dt)
    times = schedule.times()

    f_hist = np.empty((n_paths, n + 1))
    d_hist = np.empty((n_paths, n + 1, axes))
    pi_hist = np.empty((n_paths, n + 1))
    c_hist = np.empty((n_paths, n + 1))

    frozen = np.zeros(n_paths, dtype=bool)
    s_now = ens.states[:, 0, :]
    f_now = valuer.values(times[0], s_now)
    d_now = valuer.deltas(times[0], s_now)
    cash = np.zeros(n_paths)
    f_hist[:, 0] = f_now
    d_hist[:, 0] = d_now
    c_hist[:, 0] = cash
    pi_hist[:, 0] = f_now - (d_now * s_now).sum(axis=1) + cash

    for k in range(n):
        s_next = ens.states[:, k + 1, :]
        newly_frozen = (ens.absorbed_step >= 0) & (ens.absorbed_step <= k + 1)
        disc = math.exp(-r * (rn.T - times[k + 1]))
        if k + 1 < n:
            f_next = valuer.values(times[k + 1], s_next)
            d_next = valuer.deltas(times[k + 1], s_next)
            if newly_frozen.any():
                f_next = np.where(
                    newly_frozen,
                    disc * payoff.terminal_values(s_next), f_next)
                d_next = np.where(newly_frozen[:, None], d_hist[:, k, :], d_next)
        else:
            f_next = payoff.terminal_values(s_next)
            d_next = d_hist[:, k, :].copy()  # positions settle, no rebalance
        cash = cash * growth + ((d_next - d_hist[:, k, :]) * s_next).sum(axis=1)
        f_hist[:, k + 1] = f_next
        d_hist[:, k + 1] = d_next
        c_hist[:, k + 1] = cash
        pi_hist[:, k + 1] = f_next - (d_next * s_next).sum(axis=1) + cash
        frozen |= newly_frozen

    target = pi_hist[:, 0] * math.exp(r * (schedule.t_end - schedule.t0))
    errors = pi_hist[:, -1] - target

    ledgers = []
    for p in range(n_paths):
        ledgers.append(HedgeLedger(
            schedule=schedule,
            path_index=p,
            states=ens.states[p],
            option_values=f_hist[p],
            deltas=d_hist[p],
            portfolio=pi_hist[p],
            financing=c_hist[p],
            terminal_error=float(errors[p]),
            absorbed_step=int(ens.absorbed_step[p]),
        ))
    return ledgers


def replication_report(ledgers) -> ReplicationReport:
    """Summary statistics of the terminal replication errors."""
    if len(ledgers) < 2:
        raise ValueError("need at least 2 ledgers to report statistics")
    errors = np.array([led.terminal_error for led in ledgers])
    n = len(errors)
    mean = errors.mean()
    se = errors.std(ddof=1) / math.sqrt(n)
    rms = math.sqrt((errors ** 2).mean())
    worst = int(np.argmax(np.abs(errors)))
    counts, edges = np.histogram(errors, bins=21)
    return ReplicationReport(
        n_paths=n,
        mean_error=float(mean),
        mean_error_se=float(se),
        rms_error=float(rms),
        worst_error=float(errors[worst]),
        worst_path=worst,
        histogram_edges=edges,
        histogram_counts=counts,
    )
