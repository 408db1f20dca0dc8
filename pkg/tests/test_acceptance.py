"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Two clauses are implemented exactly as specified and are expected to fail,
with the measurements that demonstrate why recorded in their messages:
C2-sho (the raw 2D histogram comparison is dominated by sampling noise at
the prescribed path count and binning) and C6-ratio (discontinuous payoffs
hedge at the dt**(1/4) rate, not dt**(1/2)).  See notes in the repository
README; the rest of the suite must be green.
"""

import json
import math
import time

import numba
import numpy as np

from conftest import criterion_line

from qportfolio import (
    CallPayoff,
    DeltaPayoff,
    FpProblem,
    Grid1D,
    Grid2D,
    QubitParams,
    RiskNeutralSpec,
    ShoParams,
    StepPayoff,
    TimeSchedule,
    ensemble_moments,
    gaussian_on_grid,
    grid_mass,
    interpolate,
    mollified_delta,
    qubit_absorption_probability,
    qubit_gaussian_approx_value,
    qubit_physical_dynamics,
    replication_report,
    run_hedge,
    simulate_ensemble,
    sho_physical_dynamics,
    sho_transition_density,
    solve_backward_valuation,
    solve_forward_fp,
    value_closed_form_sho,
    value_mc,
)
from qportfolio.cli import run_command
from qportfolio.models import (
    qubit_risk_neutral_dynamics,
    sho_axis_dynamics,
)
from qportfolio.valuation import pde_value_fields

SHO = ShoParams(gamma=1.0, n_thermal=1.0)
QUBIT = QubitParams(phi_flux=1.0, theta_shift=1.0)  # kappa = 1


def test_c1_sho_moment_reproduction():
    start = time.time()
    sched = TimeSchedule(0.0, 5.0, 5000)
    ens = simulate_ensemble(sho_physical_dynamics(SHO), (2.0, 0.0), sched,
                            100_000, 1, record_steps=[5000])
    m = ensemble_moments(ens, 5000)
    g = sho_transition_density(SHO, (2.0, 0.0), 5.0)
    elapsed = time.time() - start
    z_mean = np.abs(m.mean - g.mean) / m.mean_se
    z_var = np.abs(m.variance - g.variance) / m.variance_se
    ok = bool(np.all(z_mean <= 3) and np.all(z_var <= 3) and elapsed <= 30.0)
    criterion_line(
        "C1", ok,
        f"SHO moments, 1e5 paths: |z_mean|={z_mean.round(2)}, "
        f"|z_var|={z_var.round(2)} (<=3), runtime {elapsed:.1f}s (<=30s)")
    assert ok


def test_c2_forward_fp_vs_mc_qubit():
    grid = Grid1D(-1.0, 1.0, 400)
    sched = TimeSchedule(0.0, 10.0, 5000)
    prob = FpProblem(dynamics=qubit_physical_dynamics(QUBIT), grid=grid,
                     schedule=sched,
                     initial_density=gaussian_on_grid(grid, [0.0], 0.05))
    snap = solve_forward_fp(prob, output_times=[10.0])[0]
    outer_frac = ((np.abs(grid.centers) > 0.9) * snap.values).sum() * grid.h
    ens = simulate_ensemble(qubit_physical_dynamics(QUBIT), (0.0,), sched,
                            100_000, 2, record_steps=[5000])
    z_t = ens.states_at(5000)[:, 0]
    hist, _ = np.histogram(z_t, bins=grid.faces)
    mc_mass = hist / z_t.shape[0]
    solver_mass = snap.values * grid.h
    interior = np.abs(grid.centers) <= 0.9
    l1_interior = np.abs(solver_mass - mc_mass)[interior].sum()
    ok = bool(outer_frac >= 0.98 and l1_interior <= 0.05)
    criterion_line(
        "C2-qubit", ok,
        f"collapse mass |z|>0.9: {outer_frac:.4f} (>=0.98); "
        f"interior L1 vs MC: {l1_interior:.4f} (<=0.05)")
    assert ok


def test_c2_forward_fp_vs_mc_sho_2d():
    """Implemented exactly as specified; fails on the estimator's own
    sampling-noise floor (see the printed decomposition)."""
    ax = Grid1D(-6.0, 6.0, 200)
    grid = Grid2D(ax, ax)
    sched = TimeSchedule(0.0, 2.0, 1000)
    prob = FpProblem(dynamics=sho_physical_dynamics(SHO), grid=grid,
                     schedule=sched,
                     initial_density=mollified_delta(grid, (2.0, 0.0)))
    snap = solve_forward_fp(prob, output_times=[2.0])[0]
    ens = simulate_ensemble(sho_physical_dynamics(SHO), (2.0, 0.0), sched,
                            100_000, 3, record_steps=[1000])
    x = ens.states_at(1000)
    hist, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=[ax.faces, ax.faces])
    mc_mass = hist / x.shape[0]
    solver_mass = snap.values * grid.cell_volume
    l1 = np.abs(solver_mass - mc_mass).sum()
    # decomposition against the exact Gaussian law shows where the L1 lives
    g = sho_transition_density(SHO, (2.0, 0.0), 2.0)
    px = np.exp(-(ax.centers - g.mean[0]) ** 2 / (2 * g.variance[0]))
    py = np.exp(-(ax.centers - g.mean[1]) ** 2 / (2 * g.variance[1]))
    exact = np.outer(px, py)
    exact_mass = exact / exact.sum()
    solver_vs_exact = np.abs(solver_mass - exact_mass).sum()
    mc_vs_exact = np.abs(mc_mass - exact_mass).sum()
    ok = bool(l1 <= 0.05)
    criterion_line(
        "C2-sho", ok,
        f"2D L1 solver-vs-histogram: {l1:.4f} (<=0.05); decomposition: "
        f"solver-vs-exact {solver_vs_exact:.4f}, histogram-vs-exact "
        f"{mc_vs_exact:.4f} (pure sampling noise at 1e5 paths x 200^2 bins)")
    assert ok, (
        "spec-defect red: the prescribed 10^5-path histogram on the same "
        "200x200 binning has an L1 noise floor of ~0.19, four times the "
        "stated tolerance; the solver itself is within 0.002 of the exact "
        "density (see decisions ledger)")


def test_c3_three_route_agreement_sho():
    start = time.time()
    states = np.linspace(-2.0, 2.0, 10)
    payoffs = [
        StepPayoff(thresholds=(1.0,), direction="above"),
        CallPayoff(strikes=(0.5,)),
        DeltaPayoff(points=(0.0,)),
    ]
    rates = (0.0, 0.05)
    worst_pde = 0.0
    worst_mc = 0.0
    failures = []
    for r in rates:
        rn = RiskNeutralSpec(r=r, T=1.0)
        dyn = sho_axis_dynamics(SHO, mode="risk_neutral", r=r)
        for pay in payoffs:
            fields, _ = pde_value_fields(SHO, rn, pay, (0.0,), 0.0)
            for i, s in enumerate(states):
                cf = value_closed_form_sho(SHO, rn, pay, (s,), 0.0).value
                pv = float(interpolate(fields[0], (s,)))
                rel_pde = abs(pv - cf) / abs(cf)
                worst_pde = max(worst_pde, rel_pde)
                if rel_pde > 0.01:
                    failures.append((pay.kind, r, s, "pde", rel_pde))
                mc = value_mc(dyn, rn, pay, (s,), 0.0, 100_000,
                              master_seed=1000 + i)
                tol = max(3 * mc.standard_error, 0.005 * abs(cf))
                dev = abs(mc.value - cf)
                worst_mc = max(worst_mc, dev / tol)
                if dev > tol:
                    failures.append((pay.kind, r, s, "mc", dev / tol))
    elapsed = time.time() - start
    ok = not failures and elapsed <= 120.0
    criterion_line(
        "C3", ok,
        f"route agreement on 10x3x2 panel: worst |pde-cf| {worst_pde:.2%} "
        f"(<=1%), worst mc deviation {worst_mc:.2f}x tolerance, "
        f"runtime {elapsed:.0f}s (<=120s)")
    assert ok, failures


def test_c4_discount_identity_every_node():
    worst = 0.0
    # one-axis oscillator, two rates; qubit; and a 2D oscillator scenario
    cases = []
    for r in (0.0, 0.05):
        rn = RiskNeutralSpec(r=r, T=1.0)
        grid = Grid1D(-6.0, 6.0, 200)
        term = (grid.centers > 0.5).astype(float)
        prob = FpProblem(dynamics=sho_axis_dynamics(SHO, "risk_neutral", r=r),
                         grid=grid, schedule=TimeSchedule(0.0, 1.0, 400),
                         terminal_values=term)
        cases.append((prob, rn))
    rn_q = RiskNeutralSpec(r=0.05, T=2.0)
    grid_q = Grid1D(-1.0, 1.0, 400)
    prob_q = FpProblem(dynamics=qubit_risk_neutral_dynamics(QUBIT, rn_q),
                       grid=grid_q, schedule=TimeSchedule(0.0, 2.0, 1000),
                       terminal_values=(grid_q.centers > 0).astype(float))
    cases.append((prob_q, rn_q))
    rn2 = RiskNeutralSpec(r=0.05, T=1.0)
    ax = Grid1D(-6.0, 6.0, 100)
    from qportfolio.models import sho_risk_neutral_dynamics
    prob2 = FpProblem(dynamics=sho_risk_neutral_dynamics(SHO, rn2),
                      grid=Grid2D(ax, ax),
                      schedule=TimeSchedule(0.0, 1.0, 300),
                      terminal_values=np.outer(
                          (ax.centers > 0).astype(float),
                          np.maximum(ax.centers, 0.0)))
    cases.append((prob2, rn2))
    for prob, rn in cases:
        times = [prob.schedule.t0, prob.schedule.time_at(prob.schedule.n_steps // 2)]
        g_fields = solve_backward_valuation(prob, rn, form="g", output_times=times)
        f_fields = solve_backward_valuation(prob, rn, form="f", output_times=times)
        for gf, ff in zip(g_fields, f_fields):
            disc = math.exp(-rn.r * (prob.schedule.t_end - gf.time))
            ref = disc * gf.values
            denom = np.maximum(np.abs(ref), 1e-300)
            nonzero = np.abs(ref) > 0
            rel = np.abs(ff.values - ref)[nonzero] / denom[nonzero]
            if rel.size:
                worst = max(worst, float(rel.max()))
    ok = worst <= 1e-12
    criterion_line(
        "C4", ok,
        f"f = exp(-r(T-t)) g at every node: worst rel dev {worst:.2e} (<=1e-12)")
    assert ok


def test_c5_qubit_absorption_split():
    sched = TimeSchedule(0.0, 10.0, 10_000)
    n_paths = 10_000
    details = []
    ok = True
    for i, z0 in enumerate((0.0, 0.4, 0.8)):
        ens = simulate_ensemble(qubit_physical_dynamics(QUBIT), (z0,), sched,
                                n_paths, 40 + i, record_steps=[10_000])
        frac = float((ens.states_at(10_000)[:, 0] > 0).mean())
        prob = qubit_absorption_probability(z0)
        se = math.sqrt(prob * (1 - prob) / n_paths)
        z_dev = abs(frac - prob) / se
        details.append(f"z0={z0}: mc={frac:.4f} oracle={prob:.4f} "
                       f"|z|={z_dev:.2f}")
        ok = ok and z_dev <= 3
        if z0 == 0.0:
            ok = ok and abs(frac - 0.5) <= 3 * se
    criterion_line("C5", ok, "; ".join(details) + " (all <=3 binomial SE; "
                   "z0=0 also symmetric about 0.5)")
    assert ok


_HEDGE_RN = RiskNeutralSpec(r=0.05, T=1.0)
_HEDGE_PAYOFF = StepPayoff(thresholds=(1.0,), direction="above")


def _hedge_rms(n_steps, measure="physical", seed=2024):
    ledgers = run_hedge(SHO, _HEDGE_RN, _HEDGE_PAYOFF, (1.0,),
                        TimeSchedule(0.0, 1.0, n_steps), 1000, seed,
                        measure=measure)
    return replication_report(ledgers)


def test_c6_hedging_mean_error():
    rep = _hedge_rms(400)
    z = abs(rep.mean_error) / rep.mean_error_se
    ok = z <= 3
    criterion_line(
        "C6-mean", ok,
        f"step hedge, 1e3 paths: mean error {rep.mean_error:+.5f} "
        f"= {z:.2f} SE from 0 (<=3)")
    assert ok


def test_c6_hedging_rms_ratio():
    """Implemented exactly as specified; fails because digital payoffs hedge
    at the dt**(1/4) rate (ratio ~1.4 for a 4x dt refinement), not the
    dt**(1/2) the stated band assumes."""
    coarse = _hedge_rms(100).rms_error
    fine = _hedge_rms(400).rms_error
    ratio = coarse / fine
    ok = 1.6 <= ratio <= 2.6
    criterion_line(
        "C6-ratio", ok,
        f"step-hedge RMS ratio dt=1e-2 vs 2.5e-3: {ratio:.2f} "
        f"(spec band [1.6, 2.6]; digital-payoff theory gives 4**0.25 = 1.41)")
    assert ok, (
        "spec-defect red: discrete hedging of a discontinuous (step) payoff "
        "converges at the dt**(1/4) rate, so the 4x dt refinement contracts "
        "RMS by ~1.4; the [1.6, 2.6] band presumes sqrt(dt) scaling, which "
        "holds for continuous payoffs (the call-payoff regression in "
        "test_hedging.py measures 2.0); see decisions ledger")


def test_c6_hedging_drift_independence():
    phys = _hedge_rms(1000, measure="physical").rms_error
    rn = _hedge_rms(1000, measure="risk_neutral").rms_error
    rel = abs(phys - rn) / max(phys, rn)
    ok = rel <= 0.25
    criterion_line(
        "C6-drift", ok,
        f"physical vs risk-neutral path RMS: {phys:.5f} vs {rn:.5f}, "
        f"rel diff {rel:.1%} (<=25%)")
    assert ok


def test_c7_conservation_and_convergence():
    # mass drift on the zero-flux acceptance-style scenarios
    drifts = []
    grid1 = Grid1D(-6.0, 6.0, 200)
    prob1 = FpProblem(dynamics=sho_axis_dynamics(SHO, mode="physical"),
                      grid=grid1, schedule=TimeSchedule(0.0, 2.0, 1000),
                      initial_density=mollified_delta(grid1, [2.0]))
    for snap in solve_forward_fp(prob1, output_times=[1.0, 2.0]):
        drifts.append(abs(grid_mass(snap) - 1.0) / max(snap.time, 1.0))
    gq = Grid1D(-1.0, 1.0, 400)
    probq = FpProblem(dynamics=qubit_physical_dynamics(QUBIT), grid=gq,
                      schedule=TimeSchedule(0.0, 10.0, 5000),
                      initial_density=gaussian_on_grid(gq, [0.0], 0.05))
    for snap in solve_forward_fp(probq, output_times=[5.0, 10.0]):
        drifts.append(abs(grid_mass(snap) - 1.0) / max(snap.time, 1.0))
    mass_ok = max(drifts) <= 1e-6

    # grid-halving error reduction against the exact evolved Gaussian
    def l2_err(cells):
        g = Grid1D(-6.0, 6.0, cells)
        prob = FpProblem(dynamics=sho_axis_dynamics(SHO, mode="physical"),
                         grid=g, schedule=TimeSchedule(0.0, 2.0, 4000),
                         initial_density=gaussian_on_grid(g, [2.0], 0.3))
        s = solve_forward_fp(prob, output_times=[2.0])[0]
        mean = 2.0 * math.exp(-1.0)
        var = 0.09 * math.exp(-2.0) + (1 - math.exp(-2.0))
        exact = np.exp(-(g.centers - mean) ** 2 / (2 * var)) / math.sqrt(
            2 * math.pi * var)
        return math.sqrt(((s.values - exact) ** 2).sum() * g.h)

    factor = l2_err(100) / l2_err(200)
    conv_ok = 3.2 <= factor <= 4.8
    ok = mass_ok and conv_ok
    criterion_line(
        "C7", ok,
        f"max mass drift {max(drifts):.2e}/unit time (<=1e-6); grid-halving "
        f"error factor {factor:.2f} (in [3.2, 4.8])")
    assert ok


def test_c8_byte_identical_outputs_across_worker_counts(tmp_path):
    scenario = {
        "model": "sho",
        "params": {"gamma": 1.0, "n_thermal": 1.0},
        "risk_neutral": {"r": 0.05, "T": 1.0},
        "initial_state": [1.0],
        "schedule": {"dt": 0.002},
        "experiment": "value",
        "options": {
            "payoff": {"kind": "step", "thresholds": [1.0]},
            "routes": ["closed_form", "pde", "mc"],
            "n_paths": 20_000,
        },
        "master_seed": 11,
    }
    sc_path = tmp_path / "scenario.json"
    sc_path.write_text(json.dumps(scenario))
    old = numba.get_num_threads()
    try:
        numba.set_num_threads(2)
        assert run_command(["value", "--scenario", str(sc_path),
                            "--out", str(tmp_path / "w2")]) == 0
        numba.set_num_threads(1)
        assert run_command(["value", "--scenario", str(sc_path),
                            "--out", str(tmp_path / "w1")]) == 0
        numba.set_num_threads(2)
        assert run_command(["value", "--scenario", str(sc_path),
                            "--out", str(tmp_path / "rerun")]) == 0
    finally:
        numba.set_num_threads(old)
    a = (tmp_path / "w2" / "value.json").read_bytes()
    b = (tmp_path / "w1" / "value.json").read_bytes()
    c = (tmp_path / "rerun" / "value.json").read_bytes()
    ok = a == b == c
    criterion_line(
        "C8", ok,
        f"value.json byte-identical across reruns and 1-vs-2 worker threads "
        f"({len(a)} bytes)")
    assert ok


def test_c9_qubit_gaussian_approximation_ladder():
    pay = StepPayoff(thresholds=(0.0,), direction="above")
    horizons = (1.0, 0.3, 0.1, 0.03)
    errs = []
    for dT in horizons:
        rn = RiskNeutralSpec(r=0.0, T=dT)
        res = qubit_gaussian_approx_value(QUBIT, rn, pay, 0.2, 0.0)
        errs.append(abs(res.metadata["pde_discrepancy"])
                    / abs(res.metadata["pde_value"]))
    monotone = all(errs[i] > errs[i + 1] for i in range(len(errs) - 1))
    at_01 = errs[horizons.index(0.1)]
    ok = monotone and at_01 <= 0.02
    criterion_line(
        "C9", ok,
        f"frozen-diffusion error vs PDE over kappa*dT {list(horizons)}: "
        f"{[f'{e:.3%}' for e in errs]}, monotone={monotone}, "
        f"err(0.1)={at_01:.3%} (<=2%)")
    assert ok
