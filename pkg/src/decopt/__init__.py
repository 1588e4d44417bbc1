"""Decentralized stochastic optimization over directed and undirected
networks under heavy-tailed gradient noise: normalized-gradient methods
with gradient tracking, accelerated gossip, spectral analysis of mixing
matrices, a calibrated heavy-tailed oracle, and a seeded experiment
harness with runtime invariant monitors."""

from .algorithms import (
    GossipAccel,
    PdState,
    RunParams,
    UnState,
    acc_gossip,
    dnsgd_pd_init,
    dnsgd_pd_step,
    dnsgd_un_init,
    dnsgd_un_step,
    dsgt_init,
    dsgt_step,
    normalize_rows,
    theorem_params,
)
from .errors import (
    BudgetError,
    ConfigError,
    ConvergenceError,
    DecoptError,
    DegenerateDiagonalError,
    DivergenceError,
    MonitorViolationError,
    TopologyError,
)
from .harness import (
    ExperimentConfig,
    MetricsTable,
    build_experiment,
    emit_csv,
    emit_summary,
    parse_config,
    parse_config_file,
    read_csv,
    run_experiment,
    speedup_sweep,
    summarize_runs,
)
from .metrics import (
    MetricsRecord,
    MonitorContext,
    consensus_error,
    deviation_norm,
    lyapunov,
    snapshot,
    step_monitors,
    weighted_average,
)
from .noise import NoiseModel, agent_streams, heavy_tail_draw, heavy_tail_draws, stochastic_batch_grad
from .objectives import (
    ObjectiveFamily,
    ObjectiveSuite,
    global_grad,
    global_value,
    local_grad,
    local_value,
    make_het_quadratic,
    make_robust_regression,
    quadratic_minimizer,
    smoothness_constant,
    suite_from_text,
    suite_to_text,
)
from .spectral import (
    RunningPower,
    SpectralProfile,
    diag_of_power,
    matrix_power_apply,
    min_mixing_steps,
    perron_vector,
    rho_of,
    spectral_profile,
)
from .topology import (
    MixingMatrix,
    StochasticityKind,
    Topology,
    TopologyKind,
    WeightScheme,
    assign_weights,
    build_topology,
    custom_topology,
    matrix_from_text,
    matrix_to_text,
    topology_to_text,
)

__version__ = "0.1.0"
