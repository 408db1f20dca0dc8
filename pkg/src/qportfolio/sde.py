"""Time schedules, Ito dynamics, and Euler-Maruyama path/ensemble simulation."""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import IntegrationError
from .rng import RandomStream, _as_u64, normals_block


@dataclass(frozen=True)
class TimeSchedule:
    """Uniform schedule t0 + k*dt, k = 0..n_steps; times are never accumulated."""

    t0: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.t_end > self.t0:
            raise ValueError(f"t_end must exceed t0, got [{self.t0}, {self.t_end}]")

    @property
    def dt(self):
        return (self.t_end - self.t0) / self.n_steps

    def time_at(self, k):
        return self.t0 + k * self.dt

    def times(self):
        return self.t0 + np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class Dynamics:
    """Ito SDE dx = drift(x) dt + diffusion_amplitude(x) dW, componentwise.

    drift and diffusion_amplitude map states to per-component vectors.  For
    dimension 1 they receive and return plain scalars/arrays of shape (...,);
    for dimension 2, shape (..., 2).  bounds, when given with the
    "clamp_absorb" policy, clamp an exiting component to the bound and freeze
    the whole path from that step on.

    step_params optionally names a compiled fast-path integrator.  The fast
    path consumes the identical noise stream, so it is statistically the same
    scheme (update arithmetic may differ from the generic path in the last
    ulp); every entry point remains bit-reproducible on its own.
    """

    dimension: int
    drift: Callable
    diffusion_amplitude: Callable
    bounds: Optional[tuple] = None  # ((lo, hi), ...) per component
    boundary: str = "none"  # "none" | "clamp_absorb"
    label: str = ""
    step_params: Optional[tuple] = None

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.boundary not in ("none", "clamp_absorb"):
            raise ValueError(f"unknown boundary policy {self.boundary!r}")
        if self.boundary == "clamp_absorb" and self.bounds is None:
            raise ValueError("clamp_absorb requires bounds")


@dataclass
class Path:
    """One simulated trajectory on a schedule."""

    schedule: TimeSchedule
    states: np.ndarray  # (n_steps+1, dimension)
    absorbed_step: int = -1

    @property
    def dimension(self):
        return self.states.shape[1]


@dataclass
class PathEnsemble:
    """Simulated sample paths, one counter-based stream per path.

    states has shape (n_paths, len(recorded_steps), dimension); by default
    every step is recorded, so recorded_steps is 0..n_steps.  Large runs may
    record a subset of steps (always including 0) to bound memory.
    """

    schedule: TimeSchedule
    n_paths: int
    states: np.ndarray
    recorded_steps: np.ndarray
    absorbed_step: np.ndarray  # (n_paths,), -1 when never absorbed
    provenance: tuple  # (master_seed, dynamics label)

    @property
    def dimension(self):
        return self.states.shape[2]

    def record_index(self, step):
        idx = np.searchsorted(self.recorded_steps, step)
        if idx >= len(self.recorded_steps) or self.recorded_steps[idx] != step:
            raise ValueError(f"step {step} was not recorded")
        return int(idx)

    def states_at(self, step):
        return self.states[:, self.record_index(step), :]


@dataclass(frozen=True)
class Moments:
    """Per-component unbiased sample moments with standard errors."""

    mean: np.ndarray
    variance: np.ndarray
    mean_se: np.ndarray
    variance_se: np.ndarray
    n_paths: int


def _state_array(x0, dimension):
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x.shape != (dimension,):
        raise ValueError(f"initial state must have {dimension} component(s)")
    return x


def _check_in_bounds(x, dyn):
    if dyn.bounds is None:
        return
    for d, (lo, hi) in enumerate(dyn.bounds):
        if not (lo <= x[d] <= hi):
            raise ValueError(f"initial state component {d} outside bounds [{lo}, {hi}]")


def euler_maruyama(dyn: Dynamics, x0, schedule: TimeSchedule,
                   stream: RandomStream) -> Path:
    """Integrate one path: x_{k+1} = x_k + drift(x_k) dt + amp(x_k) dW_k.

    When the dynamics carry a compiled stepper, the path is produced by that
    same kernel, so it is bit-identical to the corresponding row of a
    simulated ensemble using the same (master_seed, stream_id).
    """
    dim = dyn.dimension
    x = _state_array(x0, dim)
    _check_in_bounds(x, dyn)
    if dyn.step_params is not None and stream.counter % 2 == 0:
        states, absorbed = _run_fast(
            dyn, x, schedule, 1, stream.master_seed,
            np.arange(schedule.n_steps + 1, dtype=np.int64),
            first_stream=stream.stream_id, c0=stream.counter,
        )
        stream.counter += schedule.n_steps * dim
        return Path(schedule=schedule, states=states[0],
                    absorbed_step=int(absorbed[0]))
    dt = schedule.dt
    sqdt = np.sqrt(dt)
    states = np.empty((schedule.n_steps + 1, dim), dtype=np.float64)
    states[0] = x
    absorbed = -1
    xs = x if dim > 1 else x[0]
    for k in range(schedule.n_steps):
        z = stream.normals(dim)
        zk = z if dim > 1 else z[0]
        xs = xs + dyn.drift(xs) * dt + dyn.diffusion_amplitude(xs) * (zk * sqdt)
        if not np.all(np.isfinite(xs)):
            raise IntegrationError(
                f"non-finite state at step {k + 1}", step=k + 1
            )
        if dyn.boundary == "clamp_absorb":
            vec = np.atleast_1d(xs)
            for d, (lo, hi) in enumerate(dyn.bounds):
                if vec[d] > hi:
                    vec[d] = hi
                    absorbed = k + 1
                elif vec[d] < lo:
                    vec[d] = lo
                    absorbed = k + 1
            xs = vec if dim > 1 else vec[0]
        states[k + 1] = xs
        if absorbed >= 0:
            states[k + 2:] = states[k + 1]
            break
    return Path(schedule=schedule, states=states, absorbed_step=absorbed)


def _resolve_recording(schedule, record_steps):
    if record_steps is None:
        return np.arange(schedule.n_steps + 1, dtype=np.int64)
    rec = np.unique(np.asarray(record_steps, dtype=np.int64))
    if rec.size == 0 or rec[0] != 0:
        rec = np.concatenate(([0], rec))
    if rec[0] < 0 or rec[-1] > schedule.n_steps:
        raise ValueError("record_steps outside 0..n_steps")
    return rec


def _run_fast(dyn, x, schedule, n_paths, master_seed, rec, first_stream=0, c0=0):
    kind = dyn.step_params[0]
    out = np.empty((n_paths, len(rec), dyn.dimension), dtype=np.float64)
    err = np.empty(n_paths, dtype=np.int64)
    absorbed = np.full(n_paths, -1, dtype=np.int64)
    if kind == "affine2d":
        _, a, amp = dyn.step_params
        _kernels.sim_affine_2d(
            _as_u64(master_seed), np.int64(first_stream), np.int64(c0),
            n_paths, x,
            np.asarray(a, dtype=np.float64), np.asarray(amp, dtype=np.float64),
            schedule.dt, schedule.n_steps, rec, out, err,
        )
    elif kind == "affine1d":
        _, a, amp = dyn.step_params
        _kernels.sim_affine_1d(
            _as_u64(master_seed), np.int64(first_stream), np.int64(c0),
            n_paths, x[0], a, amp,
            schedule.dt, schedule.n_steps, rec, out, err,
        )
    elif kind == "bounded1d":
        _, beta, gcub, s_amp = dyn.step_params
        (lo, hi), = dyn.bounds
        _kernels.sim_bounded_1d(
            _as_u64(master_seed), np.int64(first_stream), np.int64(c0),
            n_paths, x[0], beta, gcub, s_amp,
            schedule.dt, schedule.n_steps, lo, hi, rec, out, absorbed, err,
        )
    else:
        raise ValueError(f"unknown fast-path kind {kind!r}")
    bad = np.nonzero(err >= 0)[0]
    if bad.size:
        p = int(bad[0])
        raise IntegrationError(
            f"non-finite state on path {p} at step {int(err[p])}",
            step=int(err[p]), path=p,
        )
    return out, absorbed


def _simulate_generic(dyn, x, schedule, n_paths, master_seed, rec):
    dim = dyn.dimension
    dt = schedule.dt
    sqdt = np.sqrt(dt)
    out = np.empty((n_paths, len(rec), dim), dtype=np.float64)
    absorbed = np.full(n_paths, -1, dtype=np.int64)
    states = np.broadcast_to(x, (n_paths, dim)).copy()
    rec_ptr = 0
    if rec[0] == 0:
        out[:, 0, :] = states
        rec_ptr = 1
    active = np.ones(n_paths, dtype=bool)
    xs = states if dim > 1 else states[:, 0]
    for k in range(schedule.n_steps):
        z = normals_block(master_seed, 0, k * dim, n_paths, dim)
        zk = z if dim > 1 else z[:, 0]
        nxt = xs + dyn.drift(xs) * dt + dyn.diffusion_amplitude(xs) * (zk * sqdt)
        xs = np.where(active if dim == 1 else active[:, None], nxt, xs)
        finite = (
            np.isfinite(xs) if dim == 1 else np.all(np.isfinite(xs), axis=1)
        )
        if not finite.all():
            p = int(np.nonzero(~finite)[0][0])
            raise IntegrationError(
                f"non-finite state on path {p} at step {k + 1}",
                step=k + 1, path=p,
            )
        if dyn.boundary == "clamp_absorb":
            vec = xs[:, None] if dim == 1 else xs
            hit = np.zeros(n_paths, dtype=bool)
            for d, (lo, hi) in enumerate(dyn.bounds):
                above = vec[:, d] > hi
                below = vec[:, d] < lo
                vec[above, d] = hi
                vec[below, d] = lo
                hit |= above | below
            newly = hit & active
            absorbed[newly] = k + 1
            active &= ~newly
            xs = vec[:, 0] if dim == 1 else vec
        if rec_ptr < len(rec) and rec[rec_ptr] == k + 1:
            out[:, rec_ptr, :] = xs[:, None] if dim == 1 else xs
            rec_ptr += 1
    return out, absorbed


def simulate_ensemble(dyn: Dynamics, x0, schedule: TimeSchedule, n_paths: int,
                      master_seed: int,
                      record_steps: Optional[Sequence[int]] = None
                      ) -> PathEnsemble:
    """Simulate n_paths independent paths; path p uses stream (master_seed, p).

    The per-path streams are counter-based, so the result is bit-identical
    regardless of how work is split across threads.  record_steps limits which
    schedule steps are stored (default: all; step 0 is always kept).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    x = _state_array(x0, dyn.dimension)
    _check_in_bounds(x, dyn)
    rec = _resolve_recording(schedule, record_steps)
    if dyn.step_params is not None:
        states, absorbed = _run_fast(dyn, x, schedule, n_paths, master_seed, rec)
    else:
        states, absorbed = _simulate_generic(dyn, x, schedule, n_paths, master_seed, rec)
    return PathEnsemble(
        schedule=schedule,
        n_paths=n_paths,
        states=states,
        recorded_steps=rec,
        absorbed_step=absorbed,
        provenance=(int(master_seed), dyn.label),
    )


def ensemble_moments(ens: PathEnsemble, step: int) -> Moments:
    """Unbiased per-component mean and variance at a schedule step.

    The standard error of the variance uses the distribution-free fourth
    moment formula, so it stays honest for strongly non-Gaussian ensembles
    (e.g. collapsed qubit populations).
    """
    if ens.n_paths < 2:
        raise ValueError("variance undefined for fewer than 2 paths")
    if not 0 <= step <= ens.schedule.n_steps:
        raise ValueError(f"step must lie in 0..{ens.schedule.n_steps}")
    x = ens.states_at(step)
    n = ens.n_paths
    mean = x.mean(axis=0)
    dev = x - mean
    var = (dev * dev).sum(axis=0) / (n - 1)
    mean_se = np.sqrt(var / n)
    m4 = (dev ** 4).mean(axis=0)
    var_of_var = (m4 - (n - 3) / (n - 1) * var * var) / n
    variance_se = np.sqrt(np.maximum(var_of_var, 0.0))
    return Moments(mean=mean, variance=var, mean_se=mean_se,
                   variance_se=variance_se, n_paths=n)
