"""Command-line front end: scenario JSON in, deterministic CSV/JSON out.

Scenarios are parsed strictly: unknown keys are rejected (with a spelling
suggestion), every validation problem is reported at once, and defaults are
applied explicitly so `--describe` can show the exact resolved experiment.
All outputs are pure functions of (resolved scenario, master seed); files
are written atomically (write-then-rename) and carry the scenario hash in
a '#' header so reruns can be byte-compared.
"""

import argparse
import difflib
import hashlib
import json
import math
import os
import sys
import tempfile

from .errors import QPortfolioError, ScenarioError
from .hedging import replication_report, run_hedge
from .models import (
    QubitParams,
    RiskNeutralSpec,
    ShoParams,
    qubit_absorption_probability,
    qubit_physical_dynamics,
    qubit_risk_neutral_dynamics,
    sho_physical_dynamics,
    sho_risk_neutral_dynamics,
    sho_axis_dynamics,
)
from .payoffs import CallPayoff, DeltaPayoff, StepPayoff
from . import pde
from .sde import TimeSchedule, ensemble_moments, simulate_ensemble
from .valuation import (
    qubit_gaussian_approx_value,
    value_closed_form_sho,
    value_mc,
    value_pde,
)

_EXPERIMENTS = ("simulate", "solve_forward", "value", "hedge", "collapse_stats")

_TOP_KEYS = {
    "model": True, "params": True, "risk_neutral": True,
    "initial_state": True, "experiment": True,
    "schedule": False, "options": False, "master_seed": False,
    "output_dir": False,
}

_DEFAULT_DT = 1e-3
_DEFAULT_N_PATHS = 10_000


class _Check:
    """Collects every validation problem instead of stopping at the first."""

    def __init__(self):
        self.problems = []

    def fail(self, path, message):
        self.problems.append(f"{path}: {message}")

    def unknown_keys(self, d, path, known):
        for k in d:
            if k not in known:
                hint = difflib.get_close_matches(k, known, n=1)
                extra = f" (did you mean {hint[0]!r}?)" if hint else ""
                self.fail(f"{path}.{k}" if path else k, f"unknown key{extra}")

    def number(self, d, path, key, required=True, default=None, positive=False,
               nonnegative=False, integer=False):
        if key not in d:
            if required:
                self.fail(f"{path}.{key}" if path else key, "missing required key")
            return default
        v = d[key]
        label = f"{path}.{key}" if path else key
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(label, f"must be a number, got {v!r}")
            return default
        if integer and int(v) != v:
            self.fail(label, f"must be an integer, got {v!r}")
            return default
        if positive and not v > 0:
            self.fail(label, f"must be > 0, got {v!r}")
            return default
        if nonnegative and v < 0:
            self.fail(label, f"must be >= 0, got {v!r}")
            return default
        return int(v) if integer else float(v)

    def choice(self, d, path, key, choices, required=True, default=None):
        if key not in d:
            if required:
                self.fail(f"{path}.{key}" if path else key, "missing required key")
            return default
        v = d[key]
        label = f"{path}.{key}" if path else key
        if v not in choices:
            hint = difflib.get_close_matches(str(v), [str(c) for c in choices], n=1)
            extra = f" (did you mean {hint[0]!r}?)" if hint else ""
            self.fail(label, f"must be one of {sorted(choices)}, got {v!r}{extra}")
            return default
        return v

    def number_list(self, d, path, key, required=True, default=None,
                    min_len=1, max_len=None):
        if key not in d:
            if required:
                self.fail(f"{path}.{key}" if path else key, "missing required key")
            return default
        v = d[key]
        label = f"{path}.{key}" if path else key
        if (not isinstance(v, list) or len(v) < min_len
                or any(isinstance(x, bool) or not isinstance(x, (int, float))
                       for x in v)):
            self.fail(label, f"must be a list of >= {min_len} numbers, got {v!r}")
            return default
        if max_len is not None and len(v) > max_len:
            self.fail(label, f"must have at most {max_len} entries")
            return default
        return [float(x) for x in v]


def _parse_payoff(chk, options, n_axes):
    raw = options.get("payoff")
    if not isinstance(raw, dict):
        chk.fail("options.payoff", "missing or not an object")
        return None
    kind = chk.choice(raw, "options.payoff", "kind",
                      ("step", "call", "delta"))
    if kind == "step":
        chk.unknown_keys(raw, "options.payoff", ("kind", "thresholds", "direction"))
        thresholds = chk.number_list(raw, "options.payoff", "thresholds")
        direction = chk.choice(raw, "options.payoff", "direction",
                               ("above", "below"), required=False, default="above")
        if thresholds is None:
            return None
        payoff = StepPayoff(thresholds=tuple(thresholds), direction=direction)
    elif kind == "call":
        chk.unknown_keys(raw, "options.payoff", ("kind", "strikes"))
        strikes = chk.number_list(raw, "options.payoff", "strikes")
        if strikes is None:
            return None
        payoff = CallPayoff(strikes=tuple(strikes))
    elif kind == "delta":
        chk.unknown_keys(raw, "options.payoff", ("kind", "points"))
        points = chk.number_list(raw, "options.payoff", "points")
        if points is None:
            return None
        payoff = DeltaPayoff(points=tuple(points))
    else:
        return None
    if payoff.n_axes != n_axes:
        chk.fail("options.payoff",
                 f"payoff has {payoff.n_axes} axes but initial_state has {n_axes}")
        return None
    return payoff


def parse_scenario(text):
    """Parse and fully validate a scenario file; returns the resolved dict.

    Raises ScenarioError carrying every problem found (not just the first).
    """
    chk = _Check()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"invalid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ScenarioError(["scenario must be a JSON object"])

    chk.unknown_keys(raw, "", _TOP_KEYS)
    model = chk.choice(raw, "", "model", ("sho", "qubit"))
    experiment = chk.choice(raw, "", "experiment", _EXPERIMENTS)
    seed = chk.number(raw, "", "master_seed", required=False, default=0,
                      integer=True)
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str):
        chk.fail("output_dir", "must be a string")
        output_dir = "out"

    params = raw.get("params")
    resolved_params = {}
    if not isinstance(params, dict):
        chk.fail("params", "missing or not an object")
    elif model == "sho":
        chk.unknown_keys(params, "params", ("gamma", "n_thermal", "omega"))
        resolved_params["gamma"] = chk.number(params, "params", "gamma",
                                              positive=True)
        resolved_params["n_thermal"] = chk.number(params, "params", "n_thermal",
                                                  nonnegative=True)
        resolved_params["omega"] = chk.number(params, "params", "omega",
                                              required=False, default=0.0)
    elif model == "qubit":
        chk.unknown_keys(params, "params", ("phi_flux", "theta_shift"))
        resolved_params["phi_flux"] = chk.number(params, "params", "phi_flux",
                                                 positive=True)
        resolved_params["theta_shift"] = chk.number(params, "params",
                                                    "theta_shift", positive=True)

    rn_raw = raw.get("risk_neutral")
    rn_resolved = {}
    if not isinstance(rn_raw, dict):
        chk.fail("risk_neutral", "missing or not an object")
    else:
        chk.unknown_keys(rn_raw, "risk_neutral", ("r", "T"))
        rn_resolved["r"] = chk.number(rn_raw, "risk_neutral", "r")
        rn_resolved["T"] = chk.number(rn_raw, "risk_neutral", "T", positive=True)

    state = chk.number_list(raw, "", "initial_state", max_len=2)
    if state is not None and model == "qubit":
        if len(state) != 1:
            chk.fail("initial_state", "qubit state has exactly one component")
        elif not -1.0 <= state[0] <= 1.0:
            chk.fail("initial_state", "qubit polarization must lie in [-1, 1]")

    sched_raw = raw.get("schedule", {})
    sched_resolved = {"t0": 0.0, "dt": _DEFAULT_DT}
    if not isinstance(sched_raw, dict):
        chk.fail("schedule", "must be an object")
    else:
        chk.unknown_keys(sched_raw, "schedule", ("t0", "dt"))
        sched_resolved["t0"] = chk.number(sched_raw, "schedule", "t0",
                                          required=False, default=0.0)
        sched_resolved["dt"] = chk.number(sched_raw, "schedule", "dt",
                                          required=False, default=_DEFAULT_DT,
                                          positive=True)
    if (rn_resolved.get("T") is not None and sched_resolved["dt"] is not None
            and sched_resolved["t0"] is not None):
        span = rn_resolved["T"] - sched_resolved["t0"]
        if span <= 0:
            chk.fail("schedule.t0", "must precede the maturity risk_neutral.T")
        else:
            n = span / sched_resolved["dt"]
            if abs(n - round(n)) > 1e-6:
                chk.fail("schedule.dt", f"must divide T - t0 = {span} exactly")
            sched_resolved["n_steps"] = int(round(n))

    options = raw.get("options", {})
    if not isinstance(options, dict):
        chk.fail("options", "must be an object")
        options = {}
    resolved_options = {}
    n_axes = len(state) if state else 0

    if experiment == "simulate":
        chk.unknown_keys(options, "options",
                         ("n_paths", "record_every", "output_paths"))
        resolved_options["n_paths"] = chk.number(
            options, "options", "n_paths", required=False,
            default=_DEFAULT_N_PATHS, integer=True, positive=True)
        resolved_options["record_every"] = chk.number(
            options, "options", "record_every", required=False, default=1,
            integer=True, positive=True)
        resolved_options["output_paths"] = chk.number(
            options, "options", "output_paths", required=False, default=100,
            integer=True, nonnegative=True)
    elif experiment == "solve_forward":
        chk.unknown_keys(options, "options",
                         ("cells", "snapshot_times", "initial_sigma"))
        cells = options.get("cells")
        if cells is None:
            cells = [200] * max(n_axes, 1)
        if (not isinstance(cells, list)
                or any(isinstance(c, bool) or not isinstance(c, int) or c < 16
                       for c in cells)):
            chk.fail("options.cells", "must be a list of integers >= 16")
            cells = [200] * max(n_axes, 1)
        if state is not None and len(cells) != len(state):
            chk.fail("options.cells", "one entry per state axis required")
        resolved_options["cells"] = cells
        snaps = chk.number_list(options, "options", "snapshot_times",
                                required=False, default=None)
        resolved_options["snapshot_times"] = snaps
        resolved_options["initial_sigma"] = chk.number(
            options, "options", "initial_sigma", required=False, default=None,
            positive=True)
    elif experiment == "value":
        chk.unknown_keys(options, "options",
                         ("payoff", "routes", "valuation_time", "n_paths",
                          "mc_steps", "cells", "pde_steps"))
        resolved_options["payoff"] = _parse_payoff(chk, options, n_axes)
        routes = options.get("routes", ["closed_form", "pde", "mc"])
        known_routes = ("closed_form", "pde", "mc")
        if (not isinstance(routes, list) or not routes
                or any(r not in known_routes for r in routes)):
            chk.fail("options.routes", f"must be a non-empty subset of {known_routes}")
            routes = list(known_routes)
        resolved_options["routes"] = routes
        resolved_options["valuation_time"] = chk.number(
            options, "options", "valuation_time", required=False,
            default=sched_resolved["t0"])
        resolved_options["n_paths"] = chk.number(
            options, "options", "n_paths", required=False, default=100_000,
            integer=True, positive=True)
        resolved_options["mc_steps"] = chk.number(
            options, "options", "mc_steps", required=False, default=None,
            integer=True, positive=True)
        resolved_options["cells"] = chk.number(
            options, "options", "cells", required=False, default=None,
            integer=True, positive=True)
        resolved_options["pde_steps"] = chk.number(
            options, "options", "pde_steps", required=False, default=None,
            integer=True, positive=True)
    elif experiment == "hedge":
        chk.unknown_keys(options, "options",
                         ("payoff", "n_paths", "value_route", "measure",
                          "output_paths", "cells", "pde_steps"))
        resolved_options["payoff"] = _parse_payoff(chk, options, n_axes)
        resolved_options["n_paths"] = chk.number(
            options, "options", "n_paths", required=False, default=1000,
            integer=True, positive=True)
        default_route = "pde" if model == "qubit" else "closed_form"
        resolved_options["value_route"] = chk.choice(
            options, "options", "value_route", ("closed_form", "pde"),
            required=False, default=default_route)
        resolved_options["measure"] = chk.choice(
            options, "options", "measure", ("physical", "risk_neutral"),
            required=False, default="physical")
        resolved_options["output_paths"] = chk.number(
            options, "options", "output_paths", required=False, default=20,
            integer=True, nonnegative=True)
        resolved_options["cells"] = chk.number(
            options, "options", "cells", required=False, default=None,
            integer=True, positive=True)
        resolved_options["pde_steps"] = chk.number(
            options, "options", "pde_steps", required=False, default=None,
            integer=True, positive=True)
    elif experiment == "collapse_stats":
        if model != "qubit":
            chk.fail("experiment", "collapse_stats requires the qubit model")
        chk.unknown_keys(options, "options", ("n_paths", "z0_values"))
        resolved_options["n_paths"] = chk.number(
            options, "options", "n_paths", required=False, default=10_000,
            integer=True, positive=True)
        z0s = chk.number_list(options, "options", "z0_values", required=False,
                              default=None)
        if z0s is not None and any(not -1 < z < 1 for z in z0s):
            chk.fail("options.z0_values", "entries must lie strictly in (-1, 1)")
            z0s = None
        resolved_options["z0_values"] = (
            z0s if z0s is not None else (state if state else []))

    if chk.problems:
        raise ScenarioError(chk.problems)

    return {
        "model": model,
        "params": resolved_params,
        "risk_neutral": rn_resolved,
        "initial_state": state,
        "schedule": sched_resolved,
        "experiment": experiment,
        "options": _jsonable(resolved_options),
        "master_seed": seed,
        "output_dir": output_dir,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (StepPayoff, CallPayoff, DeltaPayoff)):
        out = {"kind": obj.kind}
        if isinstance(obj, StepPayoff):
            out.update(thresholds=list(obj.thresholds), direction=obj.direction)
        elif isinstance(obj, CallPayoff):
            out.update(strikes=list(obj.strikes))
        else:
            out.update(points=list(obj.points))
        return out
    return obj


def _payoff_from_resolved(spec):
    if spec["kind"] == "step":
        return StepPayoff(thresholds=tuple(spec["thresholds"]),
                          direction=spec["direction"])
    if spec["kind"] == "call":
        return CallPayoff(strikes=tuple(spec["strikes"]))
    return DeltaPayoff(points=tuple(spec["points"]))


def scenario_hash(resolved):
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _fmt(x):
    return f"{x:.12e}"


def _csv_text(meta, columns, rows):
    lines = [f"# {k} = {v}" for k, v in meta.items()]
    lines.append("# columns: " + ",".join(columns))
    lines.append(",".join(columns))
    for row in rows:
        cells = [_fmt(v) if isinstance(v, float) else str(v) for v in row]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _json_text(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _model_objects(sc):
    if sc["model"] == "sho":
        p = ShoParams(**sc["params"])
    else:
        p = QubitParams(**sc["params"])
    rn = RiskNeutralSpec(r=sc["risk_neutral"]["r"], T=sc["risk_neutral"]["T"])
    sched = TimeSchedule(t0=sc["schedule"]["t0"], t_end=rn.T,
                         n_steps=sc["schedule"]["n_steps"])
    return p, rn, sched


def _physical_dynamics(sc, p, rn):
    if sc["model"] == "qubit":
        return qubit_physical_dynamics(p)
    if len(sc["initial_state"]) == 1:
        return sho_axis_dynamics(p, mode="physical")
    return sho_physical_dynamics(p)


def _run_simulate(sc, meta):
    p, rn, sched = _model_objects(sc)
    opts = sc["options"]
    dyn = _physical_dynamics(sc, p, rn)
    every = opts["record_every"]
    rec = list(range(0, sched.n_steps + 1, every))
    if rec[-1] != sched.n_steps:
        rec.append(sched.n_steps)
    ens = simulate_ensemble(dyn, sc["initial_state"], sched, opts["n_paths"],
                            sc["master_seed"], record_steps=rec)
    axes = ens.dimension
    mom_cols = ["step", "t"]
    for a in range(axes):
        mom_cols += [f"mean_{a}", f"var_{a}", f"mean_se_{a}", f"var_se_{a}"]
    mom_rows = []
    for s in ens.recorded_steps:
        m = ensemble_moments(ens, int(s))
        row = [int(s), float(sched.time_at(int(s)))]
        for a in range(axes):
            row += [float(m.mean[a]), float(m.variance[a]),
                    float(m.mean_se[a]), float(m.variance_se[a])]
        mom_rows.append(row)
    n_out = min(opts["output_paths"], ens.n_paths)
    path_cols = ["path", "step", "t"] + [f"s_{a}" for a in range(axes)] + ["absorbed_step"]
    path_rows = []
    for q in range(n_out):
        for i, s in enumerate(ens.recorded_steps):
            row = [q, int(s), float(sched.time_at(int(s)))]
            row += [float(v) for v in ens.states[q, i]]
            row.append(int(ens.absorbed_step[q]))
            path_rows.append(row)
    return {
        "moments.csv": _csv_text(meta, mom_cols, mom_rows),
        "paths.csv": _csv_text(meta, path_cols, path_rows),
    }


def _forward_grid(sc, p, rn, cells):
    if sc["model"] == "qubit":
        return pde.Grid1D(-1.0, 1.0, cells[0])
    from .models import rn_axis_moments
    _, var = rn_axis_moments(p, rn.r, rn.T - sc["schedule"]["t0"])
    sigma_inf = math.sqrt(max(p.n_thermal, var))
    half = max(6.0 * sigma_inf,
               max(abs(s) for s in sc["initial_state"]) + 3.0 * sigma_inf)
    axes = [pde.Grid1D(-half, half, c) for c in cells]
    return axes[0] if len(axes) == 1 else pde.Grid2D(axes[0], axes[1])


def _run_solve_forward(sc, meta):
    p, rn, sched = _model_objects(sc)
    opts = sc["options"]
    dyn = _physical_dynamics(sc, p, rn)
    grid = _forward_grid(sc, p, rn, opts["cells"])
    sigma0 = opts["initial_sigma"]
    if sigma0 is None:
        init = pde.mollified_delta(grid, sc["initial_state"])
    else:
        init = pde.gaussian_on_grid(grid, sc["initial_state"], sigma0)
    prob = pde.FpProblem(dynamics=dyn, grid=grid, schedule=sched,
                         initial_density=init)
    times = opts["snapshot_times"] or [rn.T]
    snaps = pde.solve_forward_fp(prob, output_times=times)
    cols = ["t"] + [f"s_{a}" for a in range(grid.ndim)] + ["density"]
    rows = []
    for snap in snaps:
        if grid.ndim == 1:
            for c, v in zip(grid.centers, snap.values):
                rows.append([float(snap.time), float(c), float(v)])
        else:
            cx, cy = grid.x.centers, grid.y.centers
            for i in range(grid.x.n_cells):
                for j in range(grid.y.n_cells):
                    rows.append([float(snap.time), float(cx[i]), float(cy[j]),
                                 float(snap.values[i, j])])
    masses = {f"mass_at_{snap.time:g}": _fmt(pde.grid_mass(snap)) for snap in snaps}
    meta = dict(meta, **masses)
    return {"density.csv": _csv_text(meta, cols, rows)}


def _run_value(sc, meta):
    p, rn, sched = _model_objects(sc)
    opts = sc["options"]
    payoff = _payoff_from_resolved(opts["payoff"])
    t = opts["valuation_time"]
    results = {}
    for route in opts["routes"]:
        if route == "closed_form":
            if sc["model"] == "sho":
                res = value_closed_form_sho(p, rn, payoff, sc["initial_state"], t)
            else:
                res = qubit_gaussian_approx_value(p, rn, payoff,
                                                  sc["initial_state"][0], t,
                                                  compare_pde=False)
        elif route == "pde":
            res = value_pde(p, rn, payoff, sc["initial_state"], t,
                            cells=opts["cells"], n_steps=opts["pde_steps"])
        else:
            if sc["model"] == "qubit":
                dyn = qubit_risk_neutral_dynamics(p, rn)
            elif len(sc["initial_state"]) == 2:
                dyn = sho_risk_neutral_dynamics(p, rn)
            else:
                dyn = sho_axis_dynamics(p, mode="risk_neutral", r=rn.r)
            res = value_mc(dyn, rn, payoff, sc["initial_state"], t,
                           opts["n_paths"], sc["master_seed"],
                           n_steps=opts["mc_steps"])
        results[route] = res.to_json_dict()
    diffs = {}
    routes = list(results)
    for i, a in enumerate(routes):
        for b in routes[i + 1:]:
            diffs[f"{a}_vs_{b}"] = results[a]["value"] - results[b]["value"]
    return {"value.json": _json_text(dict(meta, results=results, diffs=diffs))}


def _run_hedge(sc, meta):
    p, rn, sched = _model_objects(sc)
    opts = sc["options"]
    payoff = _payoff_from_resolved(opts["payoff"])
    ledgers = run_hedge(p, rn, payoff, sc["initial_state"], sched,
                        opts["n_paths"], sc["master_seed"],
                        value_route=opts["value_route"],
                        measure=opts["measure"], cells=opts["cells"],
                        pde_steps=opts["pde_steps"])
    report = replication_report(ledgers)
    axes = len(sc["initial_state"])
    cols = (["path", "step", "t"] + [f"s_{a}" for a in range(axes)] + ["f"]
            + [f"delta_{a}" for a in range(axes)] + ["pi", "financing"])
    rows = []
    for led in ledgers[:opts["output_paths"]]:
        for k in range(sched.n_steps + 1):
            row = [led.path_index, k, float(sched.time_at(k))]
            row += [float(v) for v in led.states[k]]
            row.append(float(led.option_values[k]))
            row += [float(v) for v in led.deltas[k]]
            row += [float(led.portfolio[k]), float(led.financing[k])]
            rows.append(row)
    return {
        "ledgers.csv": _csv_text(meta, cols, rows),
        "report.json": _json_text(dict(meta, **report.to_json_dict())),
    }


def _run_collapse_stats(sc, meta):
    p, rn, sched = _model_objects(sc)
    opts = sc["options"]
    dyn = qubit_physical_dynamics(p)
    cols = ["z0", "mc_fraction_plus", "oracle_probability", "binomial_se",
            "z_score", "absorbed_fraction"]
    rows = []
    for z0 in opts["z0_values"]:
        ens = simulate_ensemble(dyn, (z0,), sched, opts["n_paths"],
                                sc["master_seed"],
                                record_steps=[sched.n_steps])
        z_t = ens.states_at(sched.n_steps)[:, 0]
        frac = float((z_t > 0).mean())  # committed-basin classification
        oracle = qubit_absorption_probability(z0)
        se = math.sqrt(max(oracle * (1 - oracle), 1e-12) / opts["n_paths"])
        rows.append([float(z0), frac, float(oracle), float(se),
                     float((frac - oracle) / se),
                     float((ens.absorbed_step >= 0).mean())])
    return {"collapse.csv": _csv_text(meta, cols, rows)}


_RUNNERS = {
    "simulate": _run_simulate,
    "solve_forward": _run_solve_forward,
    "value": _run_value,
    "hedge": _run_hedge,
    "collapse_stats": _run_collapse_stats,
}


def _write_atomic(directory, filename, text):
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{filename}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, os.path.join(directory, filename))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_command(argv):
    """Run one scenario; returns the process exit status (0/1/2)."""
    parser = argparse.ArgumentParser(
        prog="qportfolio",
        description="Risk-neutral valuation experiments for oscillator and "
                    "qubit portfolios")
    parser.add_argument("experiment", choices=[e.replace("_", "-")
                                               for e in _EXPERIMENTS])
    parser.add_argument("--scenario", required=True,
                        help="path to the scenario JSON file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario master_seed")
    parser.add_argument("--out", default=None,
                        help="override the scenario output directory")
    parser.add_argument("--describe", action="store_true",
                        help="print the resolved scenario and exit")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    try:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 1

    try:
        sc = parse_scenario(text)
        wanted = args.experiment.replace("-", "_")
        if sc["experiment"] != wanted:
            raise ScenarioError(
                [f"experiment: scenario declares {sc['experiment']!r} but the "
                 f"command line asked for {wanted!r}"])
        if args.seed is not None:
            sc["master_seed"] = args.seed
        if args.out is not None:
            sc["output_dir"] = args.out
    except ScenarioError as exc:
        for problem in exc.problems:
            print(f"validation error: {problem}", file=sys.stderr)
        return 1

    if args.describe:
        print(_json_text({k: v for k, v in sc.items() if k != "output_dir"}),
              end="")
        return 0

    meta = {"scenario_hash": scenario_hash(
        {k: v for k, v in sc.items() if k != "output_dir"}),
        "master_seed": sc["master_seed"]}
    try:
        artifacts = _RUNNERS[sc["experiment"]](sc, meta)
    except QPortfolioError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    for name, text_out in artifacts.items():
        _write_atomic(sc["output_dir"], name, text_out)
    for name in sorted(artifacts):
        print(os.path.join(sc["output_dir"], name))
    return 0


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
