"""Experiment configuration, orchestration, and persistence.

Configs are flat UTF-8 ``section.key = value`` documents ('#' starts a
comment, blank lines are ignored). Unknown keys are rejected, and
validation reports every violation at once. The documented grammar:

    topology.kind        directed_ring | directed_exponential |
                         undirected_ring | erdos_renyi          (required)
    topology.n           agent count                            (required)
    topology.scheme      uniform_out | weighted_self | lazy_metropolis
                                                        [uniform_out]
    topology.self_weight in (0, 1); required iff scheme=weighted_self
    topology.er_prob     in (0, 1]; required iff kind=erdos_renyi
    topology.seed        Erdos-Renyi sampling seed               [0]
    algorithm            dnsgd_pd | dnsgd | dsgt                (required)
    objective.family     het_quadratic | robust_regression [het_quadratic]
    objective.d          dimension                               [32]
    objective.rows_per_agent                                     [50]
    objective.heterogeneity  >= 0                                [1.0]
    objective.seed       problem-instance seed                   [0]
    noise.p              moment order in (1, 2]                  [1.5]
    noise.sigma          noise level >= 0                        [1.0]
    noise.tail_index     > p                  [(p+2)/2, or 3.0 at p=2]
    run.eta              step size                               [0.05]
    run.b                per-agent batch size                    [20]
    run.K                gossip rounds per iteration   [mixing threshold
                         for dnsgd_pd, else 1; dsgt must use 1]
    run.K_hat            initialization gossip rounds            [= K]
    run.T                iteration count                         [500]
    run.theorem_eps      target accuracy; replaces eta/b/K/K_hat/T
    run.record_every     telemetry stride        [1 while T <= 2000,
                                                  else ceil(T / 2000)]
    monitors             on | off                                [on]
    seeds                comma-separated run seeds               [0]
    output.path          directory for CSV artifacts             [runs]
    summary.grad_threshold  gradient threshold for sample/
                         communication-to-threshold aggregates   [0.1]

A run is fully determined by (config, seed): repeated runs produce
byte-identical CSVs. Summaries are always computed from the persisted
per-run CSVs, never from in-memory state, so they can be rebuilt.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import algorithms as algos
from .algorithms import GossipAccel, RunParams, theorem_params
from .errors import ConfigError, DivergenceError, MonitorViolationError
from .metrics import MetricsRecord, MonitorContext, deviation_norm, snapshot, step_monitors
from .noise import NoiseModel, agent_streams, default_tail_index
from .objectives import (
    ObjectiveFamily,
    ObjectiveSuite,
    global_value,
    local_grad,
    make_het_quadratic,
    make_robust_regression,
)
from .spectral import SpectralProfile, min_mixing_steps, rho_of, spectral_profile
from .topology import (
    MixingMatrix,
    StochasticityKind,
    TopologyKind,
    WeightScheme,
    assign_weights,
    build_topology,
)

CSV_HEADER = "t,f_value,grad_norm_w,consensus_x,consensus_v,deviation,lyapunov,samples,comms,violations"

_ALGORITHMS = ("dnsgd_pd", "dnsgd", "dsgt")
_DIRECTED_KINDS = (TopologyKind.DIRECTED_RING, TopologyKind.DIRECTED_EXPONENTIAL)

_KNOWN_KEYS = {
    "topology.kind",
    "topology.n",
    "topology.scheme",
    "topology.self_weight",
    "topology.er_prob",
    "topology.seed",
    "algorithm",
    "objective.family",
    "objective.d",
    "objective.rows_per_agent",
    "objective.heterogeneity",
    "objective.seed",
    "noise.p",
    "noise.sigma",
    "noise.tail_index",
    "run.eta",
    "run.b",
    "run.K",
    "run.K_hat",
    "run.T",
    "run.theorem_eps",
    "run.record_every",
    "monitors",
    "seeds",
    "output.path",
    "summary.grad_threshold",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description."""

    topology_kind: TopologyKind
    n: int
    scheme: WeightScheme
    self_weight: float | None
    er_prob: float | None
    topology_seed: int
    algorithm: str
    family: ObjectiveFamily
    dim: int
    rows_per_agent: int
    heterogeneity: float
    objective_seed: int
    p: float
    sigma: float
    tail_index: float
    eta: float
    b: int
    gossip_k: int | None
    gossip_k_hat: int | None
    horizon: int
    theorem_eps: float | None
    record_every: int | None
    monitors: bool
    seeds: tuple[int, ...]
    output_path: str
    grad_threshold: float

    def config_hash(self) -> str:
        """Stable key for summary rows: sha256 of the canonical text."""
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def canonical_text(self) -> str:
        pairs = []
        for key in sorted(self.__dataclass_fields__):
            value = getattr(self, key)
            if isinstance(value, ObjectiveFamily | TopologyKind | WeightScheme):
                value = value.value
            pairs.append(f"{key}={value}")
        return "\n".join(pairs)

    def with_n(self, n: int) -> "ExperimentConfig":
        violations = _static_violations(self.topology_kind, n, self.algorithm, self.scheme)
        if violations:
            raise ConfigError(violations)
        return replace(self, n=n)


def _static_violations(kind, n, algorithm, scheme) -> list[str]:
    out = []
    if kind is TopologyKind.DIRECTED_EXPONENTIAL and n & (n - 1) != 0:
        out.append(f"topology.n: exponential graph needs a power of 2, got {n}")
    if algorithm == "dnsgd" and kind in _DIRECTED_KINDS:
        out.append("algorithm: dnsgd needs a doubly-stochastic mixing matrix; "
                   f"topology.kind={kind.value} is directed")
    if scheme is WeightScheme.LAZY_METROPOLIS and kind in _DIRECTED_KINDS:
        out.append("topology.scheme: lazy_metropolis needs an undirected topology")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document.

    Raises ConfigError carrying every violation found (syntax, unknown
    keys, range errors, algorithm/topology incompatibilities), not just
    the first.
    """
    raw: dict[str, str] = {}
    violations: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            violations.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _KNOWN_KEYS:
            violations.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            violations.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = value

    def take(key, conv, default=None, required=False):
        if key not in raw:
            if required:
                violations.append(f"{key}: required key missing")
            return default
        try:
            return conv(raw[key])
        except (ValueError, KeyError) as exc:
            violations.append(f"{key}: {exc}")
            return default

    def enum_conv(enum_cls):
        def conv(v):
            try:
                return enum_cls(v)
            except ValueError:
                options = ", ".join(e.value for e in enum_cls)
                raise ValueError(f"must be one of {options}; got {v!r}")
        return conv

    def bounded_float(lo=None, hi=None, lo_open=False, hi_open=False):
        def conv(v):
            x = float(v)
            if lo is not None and (x <= lo if lo_open else x < lo):
                raise ValueError(f"must be {'>' if lo_open else '>='} {lo}, got {x}")
            if hi is not None and (x >= hi if hi_open else x > hi):
                raise ValueError(f"must be {'<' if hi_open else '<='} {hi}, got {x}")
            return x
        return conv

    def positive_int(v):
        x = int(v)
        if x < 1:
            raise ValueError(f"must be >= 1, got {x}")
        return x

    def nonneg_int(v):
        x = int(v)
        if x < 0:
            raise ValueError(f"must be >= 0, got {x}")
        return x

    kind = take("topology.kind", enum_conv(TopologyKind), required=True)
    n = take("topology.n", positive_int, required=True)
    scheme = take("topology.scheme", enum_conv(WeightScheme), default=WeightScheme.UNIFORM_OUT)
    self_weight = take("topology.self_weight", bounded_float(0.0, 1.0, True, True))
    er_prob = take("topology.er_prob", bounded_float(0.0, 1.0, lo_open=True))
    topology_seed = take("topology.seed", int, default=0)
    algorithm = take("algorithm", str, required=True)
    family = take("objective.family", enum_conv(ObjectiveFamily), default=ObjectiveFamily.HET_QUADRATIC)
    dim = take("objective.d", positive_int, default=32)
    rows = take("objective.rows_per_agent", positive_int, default=50)
    het = take("objective.heterogeneity", bounded_float(0.0), default=1.0)
    objective_seed = take("objective.seed", int, default=0)
    p = take("noise.p", bounded_float(1.0, 2.0, lo_open=True), default=1.5)
    sigma = take("noise.sigma", bounded_float(0.0), default=1.0)
    tail = take("noise.tail_index", float)
    eta = take("run.eta", bounded_float(0.0, lo_open=True), default=0.05)
    batch = take("run.b", positive_int, default=20)
    gossip_k = take("run.K", positive_int)
    gossip_k_hat = take("run.K_hat", nonneg_int)
    horizon = take("run.T", positive_int, default=500)
    theorem_eps = take("run.theorem_eps", bounded_float(0.0, lo_open=True))
    record_every = take("run.record_every", positive_int)
    def on_off(v):
        if v not in ("on", "off"):
            raise ValueError(f"must be 'on' or 'off', got {v!r}")
        return v == "on"

    monitors = take("monitors", on_off, default=True)
    seeds = take("seeds", lambda v: tuple(int(s) for s in v.split(",") if s.strip()), default=(0,))
    output_path = take("output.path", str, default="runs")
    grad_threshold = take("summary.grad_threshold", bounded_float(0.0, lo_open=True), default=0.1)

    if algorithm is not None and algorithm not in _ALGORITHMS:
        violations.append(f"algorithm: must be one of {', '.join(_ALGORITHMS)}; got {algorithm!r}")
        algorithm = None
    if kind is not None and (er_prob is not None) != (kind is TopologyKind.ERDOS_RENYI):
        violations.append("topology.er_prob: required exactly when topology.kind=erdos_renyi")
    if scheme is not None and (self_weight is not None) != (scheme is WeightScheme.WEIGHTED_SELF):
        violations.append("topology.self_weight: required exactly when topology.scheme=weighted_self")
    if tail is not None and p is not None and tail <= p:
        violations.append(f"noise.tail_index: must exceed noise.p={p}, got {tail}")
    if theorem_eps is not None:
        explicit = [k for k in ("run.eta", "run.b", "run.K", "run.K_hat", "run.T") if k in raw]
        if explicit:
            violations.append(
                "run.theorem_eps: incompatible with explicit " + ", ".join(explicit)
            )
    if algorithm == "dsgt" and gossip_k not in (None, 1):
        violations.append(f"run.K: dsgt is single-gossip; K must be 1, got {gossip_k}")
    if seeds is not None and len(seeds) == 0:
        violations.append("seeds: at least one seed required")
    if None not in (kind, n, algorithm, scheme):
        violations.extend(_static_violations(kind, n, algorithm, scheme))

    if violations:
        raise ConfigError(violations)

    return ExperimentConfig(
        topology_kind=kind,
        n=n,
        scheme=scheme,
        self_weight=self_weight,
        er_prob=er_prob,
        topology_seed=topology_seed,
        algorithm=algorithm,
        family=family,
        dim=dim,
        rows_per_agent=rows,
        heterogeneity=het,
        objective_seed=objective_seed,
        p=p,
        sigma=sigma,
        tail_index=tail if tail is not None else default_tail_index(p),
        eta=eta,
        b=batch,
        gossip_k=gossip_k,
        gossip_k_hat=gossip_k_hat,
        horizon=horizon,
        theorem_eps=theorem_eps,
        record_every=record_every,
        monitors=monitors,
        seeds=seeds,
        output_path=output_path,
        grad_threshold=grad_threshold,
    )


def parse_config_file(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class BuiltExperiment:
    """Everything a run needs, constructed once per config."""

    config: ExperimentConfig
    mixing: MixingMatrix
    profile: SpectralProfile
    suite: ObjectiveSuite
    noise: NoiseModel
    params: RunParams
    x0: np.ndarray
    context: MonitorContext


def build_experiment(config: ExperimentConfig) -> BuiltExperiment:
    """Construct matrix, profile, objective, noise, and run parameters."""
    topo = build_topology(
        config.topology_kind, config.n, er_prob=config.er_prob, seed=config.topology_seed
    )
    mixing = assign_weights(topo, config.scheme, self_weight=config.self_weight)
    if config.algorithm == "dnsgd" and mixing.kind is not StochasticityKind.DOUBLY:
        raise ConfigError(
            ["algorithm: dnsgd needs a doubly-stochastic mixing matrix; "
             f"{config.scheme.value} weights on {config.topology_kind.value} fail the "
             "symmetric PSD contract"]
        )
    if config.algorithm == "dsgt" and not mixing.is_column_stochastic():
        raise ConfigError(
            ["algorithm: dsgt needs column sums equal to 1; this weighted topology "
             "is only row-stochastic"]
        )
    profile = spectral_profile(mixing)

    if config.family is ObjectiveFamily.HET_QUADRATIC:
        suite = make_het_quadratic(
            config.n, config.dim, config.rows_per_agent,
            config.heterogeneity, config.objective_seed,
        )
    else:
        suite = make_robust_regression(
            config.n, config.dim, config.rows_per_agent,
            config.heterogeneity, config.objective_seed,
        )
    noise = NoiseModel(p=config.p, sigma=config.sigma, tail_index=config.tail_index)
    x0 = np.zeros(config.dim)

    if config.algorithm == "dnsgd_pd" and config.gossip_k is not None:
        k_min = min_mixing_steps(profile)
        if config.gossip_k < k_min:
            raise ConfigError(
                [f"run.K: {config.gossip_k} is below the mixing threshold {k_min} "
                 "required for invertible diagonal scalings"]
            )

    if config.theorem_eps is not None:
        mode = "directed" if config.algorithm == "dnsgd_pd" else "undirected"
        grad0 = [float(np.linalg.norm(local_grad(suite, i, x0))) for i in range(config.n)]
        params = theorem_params(
            mode,
            suite.smoothness,
            global_value(suite, x0) - suite.f_star_lower,
            config.theorem_eps,
            config.sigma,
            config.p,
            config.n,
            profile,
            grad0,
        )
        if config.algorithm == "dsgt":
            params = replace(params, K=1, K_hat=0)
    else:
        if config.algorithm == "dnsgd_pd":
            k = config.gossip_k if config.gossip_k is not None else min_mixing_steps(profile)
        elif config.algorithm == "dsgt":
            k = 1
        else:
            k = config.gossip_k if config.gossip_k is not None else 1
        k_hat = config.gossip_k_hat if config.gossip_k_hat is not None else k
        if config.algorithm == "dsgt":
            k_hat = 0
        params = RunParams(eta=config.eta, b=config.b, K=k, K_hat=k_hat, T=config.horizon)

    if config.algorithm == "dnsgd_pd":
        contraction = rho_of(mixing, params.K, profile.pi)
    elif config.algorithm == "dnsgd":
        contraction = GossipAccel(profile.beta).contraction(params.K)
    else:
        contraction = profile.beta
    context = MonitorContext(
        algorithm=config.algorithm,
        suite=suite,
        pi=profile.pi,
        eta=params.eta,
        smoothness=suite.smoothness,
        contraction=contraction,
    )
    return BuiltExperiment(
        config=config,
        mixing=mixing,
        profile=profile,
        suite=suite,
        noise=noise,
        params=params,
        x0=x0,
        context=context,
    )


@dataclass(frozen=True)
class MetricsTable:
    """The telemetry of one run plus its outcome."""

    records: tuple[MetricsRecord, ...]
    seed: int
    config_hash: str
    abort_reason: str | None = None

    @property
    def violation_count(self) -> int:
        return sum(len(r.violations) for r in self.records)


def _record_stride(config: ExperimentConfig, horizon: int) -> int:
    if config.record_every is not None:
        return config.record_every
    return 1 if horizon <= 2000 else math.ceil(horizon / 2000)


def run_experiment(
    config: ExperimentConfig,
    seed: int,
    strict_monitors: bool = False,
    built: BuiltExperiment | None = None,
) -> MetricsTable:
    """Execute init plus T steps, recording telemetry along the way.

    Deterministic for fixed (config, seed). Monitors run on every step when
    enabled; a recorded row carries the violations seen since the previous
    recorded row. Divergence aborts the run and returns the partial table
    with the abort reason; in strict mode a monitor violation does the same.
    """
    exp = built if built is not None else build_experiment(config)
    params, ctx = exp.params, exp.context
    rngs = agent_streams(seed, config.n)
    stride = _record_stride(config, params.T)
    records: list[MetricsRecord] = []
    abort: str | None = None

    try:
        if config.algorithm == "dnsgd_pd":
            state = algos.dnsgd_pd_init(
                exp.mixing, exp.profile, exp.suite, exp.noise, params, exp.x0, rngs
            )
        elif config.algorithm == "dnsgd":
            state = algos.dnsgd_un_init(
                exp.mixing, exp.profile, exp.suite, exp.noise, params, exp.x0, rngs
            )
        else:
            state = algos.dsgt_init(exp.mixing, exp.suite, exp.noise, params, exp.x0, rngs)
        records.append(snapshot(state, ctx))

        pending: list[str] = []
        for t in range(1, params.T + 1):
            if config.algorithm == "dnsgd_pd":
                new_state = algos.dnsgd_pd_step(state, exp.mixing, exp.suite, exp.noise, params, rngs)
            elif config.algorithm == "dnsgd":
                new_state = algos.dnsgd_un_step(
                    state, exp.mixing, exp.profile, exp.suite, exp.noise, params, rngs
                )
            else:
                new_state = algos.dsgt_step(state, exp.mixing, exp.suite, exp.noise, params, rngs)
            if config.monitors:
                broken = step_monitors(state, new_state, ctx)
                pending.extend(broken)
                if strict_monitors and broken:
                    records.append(snapshot(new_state, ctx, tuple(pending)))
                    raise MonitorViolationError(t, broken)
            state = new_state
            if t % stride == 0 or t == params.T:
                records.append(snapshot(state, ctx, tuple(pending)))
                pending = []
    except DivergenceError as exc:
        abort = f"divergence: {exc}"
    except MonitorViolationError as exc:
        abort = f"monitor violation: {exc}"

    return MetricsTable(
        records=tuple(records),
        seed=seed,
        config_hash=config.config_hash(),
        abort_reason=abort,
    )


def _format_value(v: float) -> str:
    return format(v, ".17g")


def emit_csv(records, path: str | Path, abort_reason: str | None = None) -> Path:
    """Write telemetry rows; floats carry 17 significant digits.

    An aborted run appends its reason as a trailing '#' comment line,
    which the reader skips, so partial tables still round-trip.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    str(r.t),
                    _format_value(r.f_value),
                    _format_value(r.grad_norm_w),
                    _format_value(r.consensus_x),
                    _format_value(r.consensus_v),
                    _format_value(r.deviation),
                    _format_value(r.lyapunov),
                    str(r.samples),
                    str(r.comms),
                    ";".join(r.violations),
                ]
            )
        )
    if abort_reason:
        lines.append(f"# abort: {abort_reason}")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write telemetry to {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> tuple[MetricsRecord, ...]:
    """Parse an emitted CSV back into records (exact round-trip)."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read telemetry from {path}: {exc}") from exc
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: bad or missing header")
    out = []
    for line in lines[1:]:
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 10:
            raise ValueError(f"{path}: expected 10 fields, got {len(parts)}")
        out.append(
            MetricsRecord(
                t=int(parts[0]),
                f_value=float(parts[1]),
                grad_norm_w=float(parts[2]),
                consensus_x=float(parts[3]),
                consensus_v=float(parts[4]),
                deviation=float(parts[5]),
                lyapunov=float(parts[6]),
                samples=int(parts[7]),
                comms=int(parts[8]),
                violations=tuple(v for v in parts[9].split(";") if v),
            )
        )
    return tuple(out)


def run_csv_name(config: ExperimentConfig, seed: int) -> str:
    return f"{config.config_hash()[:12]}_n{config.n}_seed{seed}.csv"


@dataclass(frozen=True)
class SummaryRow:
    """Aggregates over the seeds of one config (built from persisted CSVs)."""

    config_hash: str
    n: int
    seeds: int
    final_grad_median: float
    final_grad_iqr: float
    min_grad_median: float
    min_grad_iqr: float
    final_consensus_x_median: float
    final_consensus_v_median: float
    samples_to_threshold_median: float
    comms_to_threshold_median: float


SUMMARY_HEADER = (
    "config_hash,n,seeds,final_grad_median,final_grad_iqr,min_grad_median,min_grad_iqr,"
    "final_consensus_x_median,final_consensus_v_median,"
    "samples_to_threshold_median,comms_to_threshold_median"
)


def _iqr(values: np.ndarray) -> float:
    return float(np.percentile(values, 75) - np.percentile(values, 25))


def summarize_runs(
    config: ExperimentConfig, csv_paths: list[Path], threshold: float
) -> SummaryRow:
    """Aggregate one config's persisted runs; reruns of this function on
    the same files always reproduce the same row."""
    finals, mins, cx, cv, samp_thr, comm_thr = [], [], [], [], [], []
    for path in csv_paths:
        records = read_csv(path)
        if not records:
            continue
        grads = np.array([r.grad_norm_w for r in records])
        finals.append(grads[-1])
        mins.append(grads.min())
        cx.append(records[-1].consensus_x)
        cv.append(records[-1].consensus_v)
        hit = np.flatnonzero(grads <= threshold)
        if hit.size:
            samp_thr.append(records[hit[0]].samples)
            comm_thr.append(records[hit[0]].comms)
        else:
            samp_thr.append(math.inf)
            comm_thr.append(math.inf)
    return SummaryRow(
        config_hash=config.config_hash(),
        n=config.n,
        seeds=len(csv_paths),
        final_grad_median=float(np.median(finals)),
        final_grad_iqr=_iqr(np.array(finals)),
        min_grad_median=float(np.median(mins)),
        min_grad_iqr=_iqr(np.array(mins)),
        final_consensus_x_median=float(np.median(cx)),
        final_consensus_v_median=float(np.median(cv)),
        samples_to_threshold_median=float(np.median(samp_thr)),
        comms_to_threshold_median=float(np.median(comm_thr)),
    )


def emit_summary(rows: list[SummaryRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [SUMMARY_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.config_hash,
                    str(r.n),
                    str(r.seeds),
                    _format_value(r.final_grad_median),
                    _format_value(r.final_grad_iqr),
                    _format_value(r.min_grad_median),
                    _format_value(r.min_grad_iqr),
                    _format_value(r.final_consensus_x_median),
                    _format_value(r.final_consensus_v_median),
                    _format_value(r.samples_to_threshold_median),
                    _format_value(r.comms_to_threshold_median),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _max_workers() -> int:
    raw = os.environ.get("DECOPT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_config_seeds(
    config: ExperimentConfig,
    out_dir: str | Path,
    strict_monitors: bool = False,
) -> list[tuple[Path, MetricsTable]]:
    """Run every seed of a config, persisting one CSV per run.

    Seeds are independent and may run in parallel (DECOPT_THREADS caps the
    worker count); each run owns its RNG streams and output file.
    """
    out_dir = Path(out_dir)
    built = build_experiment(config)

    def one(seed: int) -> tuple[Path, MetricsTable]:
        table = run_experiment(config, seed, strict_monitors=strict_monitors, built=built)
        target = out_dir / run_csv_name(config, seed)
        emit_csv(table.records, target, abort_reason=table.abort_reason)
        return target, table

    workers = _max_workers()
    if workers == 1:
        return [one(seed) for seed in config.seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, config.seeds))


def initial_deviation_samples(
    config: ExperimentConfig, batch: int, seeds, gossip_k: int = 200
) -> list[float]:
    """Tracker-vs-gradient deviation right after initialization.

    Uses a consensus start and a long gossip (K = 200 as the K -> infinity
    proxy) so the only surviving error term is the averaged batch noise;
    its median across seeds scales like (n * batch)^-(1 - 1/p).
    """
    exp = build_experiment(config)
    params = RunParams(eta=exp.params.eta, b=batch, K=gossip_k, K_hat=1, T=1)
    pi = exp.profile.pi
    out = []
    for seed in seeds:
        rngs = agent_streams(seed, config.n)
        state = algos.dnsgd_pd_init(
            exp.mixing, exp.profile, exp.suite, exp.noise, params, exp.x0, rngs
        )
        out.append(deviation_norm(exp.suite, exp.x0, pi, state.v, aggregate="weighted"))
    return out


def speedup_sweep(
    base_config: ExperimentConfig,
    n_list,
    out_dir: str | Path,
) -> list[SummaryRow]:
    """Run the base config at each agent count with the per-agent batch fixed.

    Persists per-run CSVs, a summary table keyed by config hash, and a side
    table of initialization deviation against n*b (the scaling behind the
    linear-speedup claim). Aggregates are computed from the persisted CSVs.
    """
    out_dir = Path(out_dir)
    rows = []
    side = ["n,b,nb,median_deviation"]
    for n in n_list:
        config = base_config.with_n(n)
        paths = [path for path, _ in run_config_seeds(config, out_dir)]
        rows.append(summarize_runs(config, paths, config.grad_threshold))
        devs = initial_deviation_samples(config, config.b, config.seeds)
        side.append(
            f"{n},{config.b},{n * config.b},{_format_value(float(np.median(devs)))}"
        )
    emit_summary(rows, out_dir / "summary.csv")
    (out_dir / "deviation_scaling.csv").write_text("\n".join(side) + "\n", encoding="utf-8")
    return rows
