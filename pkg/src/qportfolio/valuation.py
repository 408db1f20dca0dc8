"""The three valuation routes: closed-form Gaussian, Monte Carlo, and PDE.

All routes price the same object: the discounted expectation of the terminal
payoff under the risk-neutral dynamics (linear rate-r drift, physical
diffusion).  They are deliberately independent implementations so they can
cross-validate each other; the delta-hedging simulator consumes their
sensitivities.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import pde
from .models import (
    QubitParams,
    RiskNeutralSpec,
    ShoParams,
    qubit_risk_neutral_dynamics,
    rn_axis_moments,
    sho_axis_dynamics,
    sho_risk_neutral_dynamics,
)
from .payoffs import CallPayoff, DeltaPayoff, StepPayoff
from .sde import Dynamics, TimeSchedule, simulate_ensemble

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SEED_STRIDE = 0x9E3779B97F4A7C15
_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass
class ValuationResult:
    """A single valuation: value, its statistical error, and provenance."""

    value: float
    standard_error: float
    route: str  # closed_form | monte_carlo | pde
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.standard_error < 0:
            raise ValueError("standard_error must be >= 0")

    def to_json_dict(self):
        out = {"value": self.value, "standard_error": self.standard_error,
               "route": self.route}
        out.update(self.metadata)
        return out


def _norm_pdf(x):
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def gaussian_payoff_value(payoff, means, variance):
    """Undiscounted expected payoff when each axis is an independent Gaussian.

    means: array (..., n_axes); variance: scalar, common to all axes.
    Delta payoffs require strictly positive variance (they evaluate the
    density itself).
    """
    m = np.asarray(means, dtype=np.float64)
    if m.shape[-1] != payoff.n_axes:
        raise ValueError("means do not match payoff axes")
    v = float(variance)
    if isinstance(payoff, DeltaPayoff):
        if v <= 0:
            raise ValueError("delta payoff value is degenerate at zero variance")
        sig = math.sqrt(v)
        u = (np.asarray(payoff.points) - m) / sig
        return np.prod(_norm_pdf(u) / sig, axis=-1)
    if isinstance(payoff, StepPayoff):
        a = np.asarray(payoff.thresholds)
        if v == 0:
            hit = (m > a) if payoff.direction == "above" else (m < a)
            return np.prod(hit.astype(np.float64), axis=-1)
        sig = math.sqrt(v)
        d = (m - a) / sig
        tail = ndtr(d) if payoff.direction == "above" else ndtr(-d)
        return np.prod(tail, axis=-1)
    if isinstance(payoff, CallPayoff):
        k = np.asarray(payoff.strikes)
        if v == 0:
            return np.maximum(m - k, 0.0).sum(axis=-1)
        sig = math.sqrt(v)
        d = (m - k) / sig
        return ((m - k) * ndtr(d) + sig * _norm_pdf(d)).sum(axis=-1)
    raise TypeError(f"unsupported payoff type {type(payoff).__name__}")


def closed_form_values_sho(p: ShoParams, rn: RiskNeutralSpec, payoff, states, t):
    """Vectorized closed-form values for states of shape (..., n_axes)."""
    if t >= rn.T:
        raise ValueError(f"valuation time {t} must precede maturity {rn.T}")
    elapsed = rn.T - t
    growth, var = rn_axis_moments(p, rn.r, elapsed)
    means = np.asarray(states, dtype=np.float64) * growth
    disc = math.exp(-rn.r * elapsed)
    return disc * gaussian_payoff_value(payoff, means, var)


def value_closed_form_sho(p: ShoParams, rn: RiskNeutralSpec, payoff, state,
                          t) -> ValuationResult:
    """Exact discounted-Gaussian valuation for the oscillator model."""
    state = np.atleast_1d(np.asarray(state, dtype=np.float64))
    if state.shape != (payoff.n_axes,):
        raise ValueError("state must supply one coordinate per payoff axis")
    val = closed_form_values_sho(p, rn, payoff, state, t)
    return ValuationResult(
        value=float(val), standard_error=0.0, route="closed_form",
        metadata=_meta("sho", rn, state, t, payoff),
    )


def _meta(model, rn, state, t, payoff):
    return {
        "model": model,
        "state": [float(s) for s in np.atleast_1d(state)],
        "t": float(t),
        "T": float(rn.T),
        "r": float(rn.r),
        "payoff": payoff.kind,
        "is_density": payoff.is_density,
    }


def _derived_seed(master_seed, axis):
    return (int(master_seed) + (axis + 1) * _SEED_STRIDE) & _U64


def _terminal_samples(dyn_rn, rn, state, t, n_paths, master_seed, n_steps):
    elapsed = rn.T - t
    if n_steps is None:
        n_steps = max(50, int(round(elapsed / 0.01)))
    sched = TimeSchedule(t, rn.T, n_steps)
    axes = len(state)
    if dyn_rn.dimension == axes:
        ens = simulate_ensemble(dyn_rn, state, sched, n_paths, master_seed,
                                record_steps=[n_steps])
        return ens.states_at(n_steps)
    if dyn_rn.dimension == 1:
        # i.i.d. axes: one 1D ensemble per axis with a derived seed
        cols = []
        for a in range(axes):
            ens = simulate_ensemble(dyn_rn, (state[a],), sched, n_paths,
                                    _derived_seed(master_seed, a),
                                    record_steps=[n_steps])
            cols.append(ens.states_at(n_steps)[:, 0])
        return np.stack(cols, axis=1)
    raise ValueError("dynamics dimension does not match the state")


def value_mc(dyn_rn: Dynamics, rn: RiskNeutralSpec, payoff, state, t,
             n_paths, master_seed, n_steps=None) -> ValuationResult:
    """Discounted Monte Carlo expectation over risk-neutral sample paths.

    Delta payoffs are estimated by a Gaussian product kernel with bandwidth
    std * n^(-1/5) per axis.  The standard error is the discounted sample
    standard deviation over sqrt(n_paths).
    """
    if t >= rn.T:
        raise ValueError(f"valuation time {t} must precede maturity {rn.T}")
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100 for a meaningful standard error")
    state = np.atleast_1d(np.asarray(state, dtype=np.float64))
    if state.shape != (payoff.n_axes,):
        raise ValueError("state must supply one coordinate per payoff axis")
    terminal = _terminal_samples(dyn_rn, rn, state, t, n_paths, master_seed,
                                 n_steps)
    if isinstance(payoff, DeltaPayoff):
        std = terminal.std(axis=0, ddof=1)
        if np.any(std <= 0):
            raise ValueError("degenerate terminal sample; cannot form a KDE")
        bw = std * n_paths ** (-0.2)
        u = (np.asarray(payoff.points) - terminal) / bw
        samples = np.prod(_norm_pdf(u) / bw, axis=1)
    else:
        samples = payoff.terminal_values(terminal)
    disc = math.exp(-rn.r * (rn.T - t))
    value = disc * samples.mean()
    se = disc * samples.std(ddof=1) / math.sqrt(n_paths)
    meta = _meta(dyn_rn.label or "custom", rn, state, t, payoff)
    meta.update({"n_paths": int(n_paths), "master_seed": int(master_seed)})
    return ValuationResult(value=float(value), standard_error=float(se),
                           route="monte_carlo", metadata=meta)


def _payoff_axis_point(payoff, axis):
    if isinstance(payoff, DeltaPayoff):
        return payoff.points[axis], False
    if isinstance(payoff, StepPayoff):
        return payoff.thresholds[axis], True
    return payoff.strikes[axis], True


def _sho_grid_axis(p, rn, payoff, state, t, cells, axis):
    elapsed = rn.T - t
    _, var = rn_axis_moments(p, rn.r, elapsed)
    sigma_inf = math.sqrt(max(p.n_thermal, var))
    crit, align = _payoff_axis_point(payoff, axis)
    pts = [abs(s) for s in np.atleast_1d(state)] + [abs(crit)]
    half = max(6.0 * sigma_inf, max(pts) + 3.0 * sigma_inf)
    lower, upper = -half, half
    if align:
        # place the payoff discontinuity exactly on a cell face, otherwise the
        # terminal data is effectively shifted by up to h/2
        h = (upper - lower) / cells
        shift = crit - (lower + round((crit - lower) / h) * h)
        lower += shift
        upper += shift
    return pde.Grid1D(lower, upper, cells)


def _backward_problem(model, rn, payoff, state, t, cells, n_steps):
    axes = payoff.n_axes
    if isinstance(model, QubitParams):
        if axes != 1:
            raise ValueError("the qubit PDE route is one-dimensional")
        grid = pde.Grid1D(-1.0, 1.0, cells or 400)
        dyn = qubit_risk_neutral_dynamics(model, rn)
    elif isinstance(model, ShoParams):
        if axes == 1:
            grid = _sho_grid_axis(model, rn, payoff, state, t, cells or 500, 0)
            dyn = sho_axis_dynamics(model, mode="risk_neutral", r=rn.r)
        elif axes == 2:
            ax0 = _sho_grid_axis(model, rn, payoff, state, t, cells or 250, 0)
            ax1 = _sho_grid_axis(model, rn, payoff, state, t, cells or 250, 1)
            grid = pde.Grid2D(ax0, ax1)
            dyn = sho_risk_neutral_dynamics(model, rn)
        else:
            raise ValueError("the PDE route supports at most 2 axes")
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")
    elapsed = rn.T - t
    if n_steps is None:
        smax = max(abs(a.lower) for a in grid.axes) + max(a.upper for a in grid.axes)
        max_adv = abs(rn.r) * smax
        hmin = min(a.h for a in grid.axes)
        dt_bound = 2.0 * hmin / max_adv if max_adv > 0 else math.inf
        dt = min(elapsed / 300.0, 0.5 * dt_bound)
        n_steps = max(300, int(math.ceil(elapsed / dt)))
    sched = TimeSchedule(t, rn.T, n_steps)
    prob = pde.FpProblem(dynamics=dyn, grid=grid, schedule=sched,
                         terminal_values=payoff.terminal_field(grid))
    return prob


def pde_value_fields(model, rn, payoff, state, t, output_times=None,
                     cells=None, n_steps=None):
    """Backward-solved discounted value fields, for reuse by deltas/hedging."""
    prob = _backward_problem(model, rn, payoff, state, t, cells, n_steps)
    fields = pde.solve_backward_valuation(prob, rn, form="f",
                                          output_times=output_times or [t])
    return fields, prob


def value_pde(model, rn: RiskNeutralSpec, payoff, state, t, cells=None,
              n_steps=None) -> ValuationResult:
    """Valuation by backward finite-difference solve and interpolation."""
    if t >= rn.T:
        raise ValueError(f"valuation time {t} must precede maturity {rn.T}")
    state = np.atleast_1d(np.asarray(state, dtype=np.float64))
    if state.shape != (payoff.n_axes,):
        raise ValueError("state must supply one coordinate per payoff axis")
    fields, prob = pde_value_fields(model, rn, payoff, state, t,
                                    cells=cells, n_steps=n_steps)
    value = pde.interpolate(fields[0], state)
    model_name = "qubit" if isinstance(model, QubitParams) else "sho"
    meta = _meta(model_name, rn, state, t, payoff)
    meta.update({
        "cells": [a.n_cells for a in prob.grid.axes],
        "n_steps": prob.schedule.n_steps,
    })
    return ValuationResult(value=float(value), standard_error=0.0,
                           route="pde", metadata=meta)


def qubit_gaussian_approx_value(p: QubitParams, rn: RiskNeutralSpec, payoff,
                                z0, t, compare_pde=True, cells=None,
                                n_steps=None) -> ValuationResult:
    """Frozen-diffusion Gaussian approximation for the qubit model.

    The state-dependent diffusion is frozen at its initial value,
    D_bar = kappa*(1-z0^2)^2/2, after which the discounted-Gaussian machinery
    of the oscillator model applies with mean z0*exp(r*(T-t)) and the
    matching rate-r variance.  The discrepancy against the PDE route is
    reported alongside (it quantifies the approximation, which is only
    controlled for short horizons kappa*(T-t) -> 0).
    """
    if t >= rn.T:
        raise ValueError(f"valuation time {t} must precede maturity {rn.T}")
    if not -1.0 < z0 < 1.0:
        raise ValueError(f"z0 must lie strictly inside (-1, 1), got {z0}")
    if payoff.n_axes != 1:
        raise ValueError("the qubit approximation is one-dimensional")
    elapsed = rn.T - t
    d_bar = 0.5 * p.kappa * (1.0 - z0 * z0) ** 2
    growth = math.exp(rn.r * elapsed)
    if abs(rn.r) * elapsed < 1e-8:
        var = 2.0 * d_bar * elapsed
    else:
        var = 2.0 * d_bar * math.expm1(2.0 * rn.r * elapsed) / (2.0 * rn.r)
    mean = np.array([z0 * growth])
    disc = math.exp(-rn.r * elapsed)
    value = disc * float(gaussian_payoff_value(payoff, mean, var))
    meta = _meta("qubit", rn, (z0,), t, payoff)
    meta.update({"approximation": "frozen_diffusion", "d_bar": d_bar})
    if compare_pde:
        ref = value_pde(p, rn, payoff, (z0,), t, cells=cells, n_steps=n_steps)
        meta["pde_value"] = ref.value
        meta["pde_discrepancy"] = value - ref.value
    return ValuationResult(value=value, standard_error=0.0,
                           route="closed_form", metadata=meta)


def _default_bumps(state):
    return np.array([1e-4 * max(1.0, abs(s)) for s in state])


def deltas(value_route, model, rn: RiskNeutralSpec, payoff, state, t,
           bump=None, n_paths=100_000, master_seed=0, cells=None,
           n_steps=None):
    """Central-difference sensitivities d(value)/d(state_i) per axis.

    The MC route reuses the same master_seed on both sides of every bump
    (common random numbers), which cancels most of the sampling noise out of
    the difference quotient.
    """
    state = np.atleast_1d(np.asarray(state, dtype=np.float64))
    if state.shape != (payoff.n_axes,):
        raise ValueError("state must supply one coordinate per payoff axis")
    bumps = _default_bumps(state) if bump is None else np.broadcast_to(
        np.asarray(bump, dtype=np.float64), state.shape).copy()
    if np.any(bumps <= 0):
        raise ValueError("bump must be positive")

    if value_route == "closed_form":
        if not isinstance(model, ShoParams):
            raise ValueError("closed_form deltas exist only for the sho model")

        def value_at(s):
            return float(closed_form_values_sho(model, rn, payoff, s, t))

    elif value_route == "mc":
        if isinstance(model, QubitParams):
            dyn = qubit_risk_neutral_dynamics(model, rn)
        else:
            dyn = sho_axis_dynamics(model, mode="risk_neutral", r=rn.r)

        def value_at(s):
            return value_mc(dyn, rn, payoff, s, t, n_paths, master_seed,
                            n_steps=n_steps).value

    elif value_route == "pde":
        fields, prob = pde_value_fields(model, rn, payoff, state, t,
                                        cells=cells, n_steps=n_steps)
        for a, ax in enumerate(prob.grid.axes):
            if bumps[a] < 2.0 * ax.h:
                bumps[a] = 2.0 * ax.h
            if (state[a] - bumps[a] < ax.lower + 2.0 * ax.h
                    or state[a] + bumps[a] > ax.upper - 2.0 * ax.h):
                raise ValueError(
                    f"bump on axis {a} reaches within 2 grid spacings of the edge"
                )

        def value_at(s):
            return float(pde.interpolate(fields[0], s))

    else:
        raise ValueError(f"unknown value_route {value_route!r}")

    out = np.empty(len(state))
    for a in range(len(state)):
        up = state.copy()
        dn = state.copy()
        up[a] += bumps[a]
        dn[a] -= bumps[a]
        out[a] = (value_at(up) - value_at(dn)) / (2.0 * bumps[a])
    return out
