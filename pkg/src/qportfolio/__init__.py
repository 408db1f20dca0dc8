"""Risk-neutral valuation and delta hedging for continuously monitored
oscillator and qubit portfolios: SDE simulation, Fokker-Planck and backward
valuation PDE solvers, three cross-validating pricing routes, and a
replication simulator."""

from .errors import (
    IntegrationError,
    OracleError,
    QPortfolioError,
    ScenarioError,
    SchemeError,
    StabilityError,
)
from .hedging import (
    HedgeLedger,
    ReplicationReport,
    portfolio_value,
    replication_report,
    run_hedge,
)
from .models import (
    GaussianSpec,
    QubitParams,
    RiskNeutralSpec,
    ShoParams,
    qubit_absorption_probability,
    qubit_physical_dynamics,
    qubit_risk_neutral_dynamics,
    rn_axis_moments,
    sho_axis_dynamics,
    sho_physical_dynamics,
    sho_risk_neutral_dynamics,
    sho_transition_density,
    thermal_occupation,
)
from .payoffs import CallPayoff, DeltaPayoff, StepPayoff
from .pde import (
    DensityGrid,
    FpProblem,
    Grid1D,
    Grid2D,
    ValueField,
    gaussian_on_grid,
    grid_mass,
    interpolate,
    mollified_delta,
    solve_backward_valuation,
    solve_forward_fp,
)
from .rng import RandomStream, make_stream, wiener_increments
from .sde import (
    Dynamics,
    Moments,
    Path,
    PathEnsemble,
    TimeSchedule,
    ensemble_moments,
    euler_maruyama,
    simulate_ensemble,
)
from .valuation import (
    ValuationResult,
    deltas,
    qubit_gaussian_approx_value,
    value_closed_form_sho,
    value_mc,
    value_pde,
)

__version__ = "0.1.0"
