"""Physical and risk-neutral dynamics for the two portfolio models.

Damped oscillator quadratures (x, y): mean-reverting with additive noise,
stationary variance equal to the thermal occupation n, diffusion constant
D = gamma*n/2.  Qubit polarization z in [-1, 1]: measurement-induced
collapse with drift velocity 2z(1-z^2) and diffusion (1-z^2)^2/2, both
scaled by the measurement rate kappa = phi * theta^2.

Risk-neutral variants replace the physical drift by a linear rate-r drift
and keep the diffusion unchanged.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import OracleError
from .sde import Dynamics

# Switch to the r -> 0 variance limit below this value of |r|*t.
_SMALL_RATE_TIME = 1e-8


@dataclass(frozen=True)
class ShoParams:
    """Damped oscillator: damping rate gamma, thermal occupation n_thermal.

    omega is bookkeeping only (it sets n_thermal via thermal_occupation when
    a temperature is known); the quadrature dynamics are written in the
    co-rotating frame, so omega never enters drift or diffusion.
    """

    gamma: float
    n_thermal: float
    omega: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.n_thermal < 0:
            raise ValueError(f"n_thermal must be >= 0, got {self.n_thermal}")

    @property
    def diffusion_d(self):
        """Diffusion constant D = gamma * n / 2."""
        return 0.5 * self.gamma * self.n_thermal


@dataclass(frozen=True)
class QubitParams:
    """Continuously monitored qubit: photon flux and per-photon phase shift."""

    phi_flux: float
    theta_shift: float

    def __post_init__(self):
        if self.phi_flux <= 0:
            raise ValueError(f"phi_flux must be positive, got {self.phi_flux}")
        if self.theta_shift <= 0:
            raise ValueError(f"theta_shift must be positive, got {self.theta_shift}")

    @property
    def kappa(self):
        """Measurement rate kappa = phi * theta^2."""
        return self.phi_flux * self.theta_shift ** 2


@dataclass(frozen=True)
class RiskNeutralSpec:
    """Wanted portfolio growth rate r and terminal time T (d Pi = r Pi dt)."""

    r: float
    T: float

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")


class GaussianSpec:
    """Independent per-component Gaussian: mean and variance vectors."""

    def __init__(self, mean, variance):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        self.variance = np.atleast_1d(np.asarray(variance, dtype=np.float64))
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance must have the same shape")
        if np.any(self.variance < 0):
            raise ValueError("variance must be >= 0 componentwise")

    def __repr__(self):
        return f"GaussianSpec(mean={self.mean!r}, variance={self.variance!r})"


def thermal_occupation(hbar_omega_over_kT):
    """Mean thermal excitation 1/(e^x - 1) for x = hbar*omega/(kB*T) > 0."""
    x = float(hbar_omega_over_kT)
    if x <= 0:
        raise ValueError(f"argument must be positive, got {x}")
    return 1.0 / math.expm1(x)


def sho_physical_dynamics(p: ShoParams) -> Dynamics:
    """Quadrature SDE: dx = -(gamma/2) x dt + sqrt(2D) dW, same in y."""
    coef = -0.5 * p.gamma
    amp = math.sqrt(2.0 * p.diffusion_d)
    return Dynamics(
        dimension=2,
        drift=lambda s: coef * s,
        diffusion_amplitude=lambda s: amp * np.ones_like(s),
        label=f"sho_physical(gamma={p.gamma},n={p.n_thermal})",
        step_params=("affine2d", (coef, coef), (amp, amp)),
    )


def sho_risk_neutral_dynamics(p: ShoParams, rn: RiskNeutralSpec) -> Dynamics:
    """Hedged-world SDE: dx = r x dt + sqrt(2D) dW; diffusion unchanged."""
    coef = rn.r
    amp = math.sqrt(2.0 * p.diffusion_d)
    return Dynamics(
        dimension=2,
        drift=lambda s: coef * s,
        diffusion_amplitude=lambda s: amp * np.ones_like(s),
        label=f"sho_risk_neutral(gamma={p.gamma},n={p.n_thermal},r={rn.r})",
        step_params=("affine2d", (coef, coef), (amp, amp)),
    )


def _rn_variance(two_d, r, elapsed):
    # Var' = 2 r Var + 2 D; closed form with a guarded r -> 0 limit.
    if abs(r) * elapsed < _SMALL_RATE_TIME:
        return two_d * elapsed
    return two_d * math.expm1(2.0 * r * elapsed) / (2.0 * r)


def rn_axis_moments(p: ShoParams, r, elapsed):
    """Risk-neutral per-axis growth factor exp(r*t) and variance."""
    if elapsed < 0:
        raise ValueError(f"elapsed must be >= 0, got {elapsed}")
    return math.exp(r * elapsed), _rn_variance(2.0 * p.diffusion_d, r, elapsed)


def sho_transition_density(p: ShoParams, x0, elapsed, mode="physical",
                           r=None) -> GaussianSpec:
    """Per-component Gaussian law of the state after `elapsed` time.

    physical:      mean x0*exp(-gamma*t/2), variance n*(1 - exp(-gamma*t))
    risk_neutral:  mean x0*exp(r*t),        variance 2D*(exp(2rt) - 1)/(2r)
    """
    if elapsed < 0:
        raise ValueError(f"elapsed must be >= 0, got {elapsed}")
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if mode == "physical":
        mean = x * math.exp(-0.5 * p.gamma * elapsed)
        var = p.n_thermal * (-math.expm1(-p.gamma * elapsed))
    elif mode == "risk_neutral":
        if r is None:
            raise ValueError("risk_neutral mode requires r")
        mean = x * math.exp(r * elapsed)
        var = _rn_variance(2.0 * p.diffusion_d, r, elapsed)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return GaussianSpec(mean=mean, variance=np.full_like(x, var))


def sho_axis_dynamics(p: ShoParams, mode="physical", r=None) -> Dynamics:
    """One-quadrature version of the oscillator SDE (the axes are i.i.d.)."""
    if mode == "physical":
        coef = -0.5 * p.gamma
    elif mode == "risk_neutral":
        if r is None:
            raise ValueError("risk_neutral mode requires r")
        coef = float(r)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    amp = math.sqrt(2.0 * p.diffusion_d)
    return Dynamics(
        dimension=1,
        drift=lambda s: coef * s,
        diffusion_amplitude=lambda s: amp * np.ones_like(s),
        label=f"sho_axis_{mode}(gamma={p.gamma},n={p.n_thermal},r={r})",
        step_params=("affine1d", coef, amp),
    )


def qubit_physical_dynamics(p: QubitParams) -> Dynamics:
    """Collapse SDE: dz = 2 kappa z(1-z^2) dt + sqrt(kappa) (1-z^2) dW.

    The amplitude is sqrt(2 * kappa * D(z)) with D(z) = (1-z^2)^2/2.  The
    state is confined to [-1, 1]; a discrete overshoot is clamped to the
    bound and the path frozen (the continuous process never crosses).
    """
    gcub = 2.0 * p.kappa
    beta = 0.0
    s_amp = math.sqrt(p.kappa)
    return Dynamics(
        dimension=1,
        drift=lambda z: beta * z + gcub * (z * (1.0 - z * z)),
        diffusion_amplitude=lambda z: s_amp * (1.0 - z * z),
        bounds=((-1.0, 1.0),),
        boundary="clamp_absorb",
        label=f"qubit_physical(kappa={p.kappa})",
        step_params=("bounded1d", beta, gcub, s_amp),
    )


def qubit_risk_neutral_dynamics(p: QubitParams, rn: RiskNeutralSpec) -> Dynamics:
    """Hedged-world qubit SDE: dz = r z dt + sqrt(kappa) (1-z^2) dW."""
    gcub = 0.0
    beta = rn.r
    s_amp = math.sqrt(p.kappa)
    return Dynamics(
        dimension=1,
        drift=lambda z: beta * z + gcub * (z * (1.0 - z * z)),
        diffusion_amplitude=lambda z: s_amp * (1.0 - z * z),
        bounds=((-1.0, 1.0),),
        boundary="clamp_absorb",
        label=f"qubit_risk_neutral(kappa={p.kappa},r={rn.r})",
        step_params=("bounded1d", beta, gcub, s_amp),
    )


def qubit_absorption_probability(z0):
    """Probability that the physical qubit polarization commits to +1.

    Test oracle via the scale function of the 1D diffusion:
    S'(z) = exp(-int_0^z V(u)/D(u) du) with V(u) = 2u(1-u^2) and
    D(u) = (1-u^2)^2/2 (the measurement rate cancels from the ratio), and
    Prob = (S(z0) - S(-1)) / (S(1) - S(-1)).  Both integrals are evaluated
    by adaptive quadrature; non-convergence raises instead of guessing.
    """
    if not -1.0 < z0 < 1.0:
        raise ValueError(f"z0 must lie strictly inside (-1, 1), got {z0}")

    def drift_over_diffusion(u):
        return (2.0 * u * (1.0 - u * u)) / (0.5 * (1.0 - u * u) ** 2)

    def sprime(z):
        val, err = integrate.quad(drift_over_diffusion, 0.0, z,
                                  limit=400, epsabs=1e-11, epsrel=1e-11)
        if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
            raise OracleError(f"inner scale integral did not converge at z={z}")
        return math.exp(-val)

    def scale(z):
        val, err = integrate.quad(sprime, 0.0, z, limit=400,
                                  epsabs=1e-10, epsrel=1e-10)
        if not np.isfinite(val) or err > 1e-7:
            raise OracleError(f"scale function quadrature did not converge at z={z}")
        return val

    s_lo = scale(-1.0)
    s_hi = scale(1.0)
    s_z = scale(float(z0))
    denom = s_hi - s_lo
    if not np.isfinite(denom) or denom <= 0:
        raise OracleError("scale function is not increasing across [-1, 1]")
    return (s_z - s_lo) / denom
