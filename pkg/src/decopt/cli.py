"""Command-line entry point.

    decopt run   --config <path> [--seed N] [--out <dir>] [--strict-monitors]
    decopt sweep --config <path> --n 1,2,4,8 [--out <dir>]
    decopt check --config <path>

Exit codes: 0 success, 2 monitor violation, 3 divergence, 4 config error.
DECOPT_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .errors import ConfigError, ConvergenceError, DecoptError
from .harness import (
    build_experiment,
    emit_summary,
    parse_config_file,
    run_config_seeds,
    run_experiment,
    speedup_sweep,
    summarize_runs,
)
from .spectral import diag_of_power, min_mixing_steps, perron_vector, rho_of

EXIT_OK = 0
EXIT_MONITOR = 2
EXIT_DIVERGENCE = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    # usage errors map to the config-error exit code, keeping 2 reserved
    # for monitor violations
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the configured experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="run only this seed")
    run.add_argument("--out", default=None, help="output directory (default: config output.path)")
    run.add_argument("--strict-monitors", action="store_true")

    sweep = sub.add_parser("sweep", help="rerun the config across agent counts")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--n", required=True, help="comma-separated agent counts")
    sweep.add_argument("--out", default=None)

    check = sub.add_parser("check", help="run the invariant suite for the config")
    check.add_argument("--config", required=True)
    return parser


def _cmd_run(args) -> int:
    config = parse_config_file(args.config)
    if args.seed is not None:
        config = replace(config, seeds=(args.seed,))
    out_dir = args.out if args.out is not None else config.output_path
    results = run_config_seeds(config, out_dir, strict_monitors=args.strict_monitors)
    status = EXIT_OK
    for path, table in results:
        last = table.records[-1] if table.records else None
        note = f" [{table.abort_reason}]" if table.abort_reason else ""
        grad = f"{last.grad_norm_w:.6g}" if last else "n/a"
        print(f"seed {table.seed}: {len(table.records)} records, final |grad f| = {grad}"
              f" -> {path}{note}")
        if table.abort_reason and "divergence" in table.abort_reason:
            status = max(status, EXIT_DIVERGENCE)
        elif table.violation_count or table.abort_reason:
            status = max(status, EXIT_MONITOR)
    row = summarize_runs(config, [p for p, _ in results], config.grad_threshold)
    summary_path = emit_summary([row], f"{out_dir}/summary.csv")
    print(f"summary -> {summary_path}")
    return status


def _cmd_sweep(args) -> int:
    config = parse_config_file(args.config)
    n_list = [int(v) for v in args.n.split(",") if v.strip()]
    if not n_list:
        raise ConfigError(["--n: at least one agent count required"])
    out_dir = args.out if args.out is not None else config.output_path
    rows = speedup_sweep(config, n_list, out_dir)
    for row in rows:
        print(
            f"n={row.n}: median final |grad f| = {row.final_grad_median:.6g}, "
            f"median samples to {config.grad_threshold} = {row.samples_to_threshold_median:.6g}"
        )
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def _cmd_check(args) -> int:
    """Invariant suite: matrix identities plus a short strict-monitored run."""
    config = parse_config_file(args.config)
    exp = build_experiment(config)
    a, profile = exp.mixing, exp.profile
    n = a.n
    failures: list[str] = []

    def check(name: str, ok: bool) -> None:
        print(f"  {'ok  ' if ok else 'FAIL'} {name}")
        if not ok:
            failures.append(name)

    print(f"matrix invariants (n={n}, beta={profile.beta:.6f}, kappa={profile.kappa:.6f}):")
    check("row sums equal 1", float(np.max(np.abs(a.a.sum(axis=1) - 1))) <= 1e-12)
    pi = perron_vector(a)
    check("equilibrium residual <= 1e-10", float(np.max(np.abs(pi @ a.a - pi))) <= 1e-10)
    ones = np.ones(n)
    deflated = a.a - np.outer(ones, profile.pi)
    power_ok = True
    ak = np.eye(n)
    dk = np.eye(n)
    for _ in range(20):
        ak = ak @ a.a
        dk = dk @ deflated
        if np.max(np.abs(ak - np.outer(ones, profile.pi) - dk)) > 1e-10:
            power_ok = False
            break
    check("deflated power identity (K <= 20)", power_ok)
    contraction_ok = all(
        rho_of(a, k, profile.pi)
        <= np.sqrt(n * profile.kappa) * profile.beta**k + 1e-9
        for k in range(1, 21)
    )
    check("gossip deviation bound (K <= 20)", contraction_ok)
    k_min = min_mixing_steps(profile)
    diag = diag_of_power(a, k_min)
    check(
        f"diagonal floor at K={k_min}",
        float(diag.min()) >= 1.0 / (2 * n * profile.kappa) - 1e-12,
    )

    print("short strict-monitored run:")
    short = replace(config, horizon=min(config.horizon, 25), seeds=(config.seeds[0],))
    table = run_experiment(short, short.seeds[0], strict_monitors=True)
    run_ok = table.abort_reason is None and table.violation_count == 0
    check("no monitor violations", run_ok and "divergence" not in (table.abort_reason or ""))

    if failures:
        print(f"{len(failures)} invariant check(s) failed")
        return EXIT_MONITOR
    print("all invariant checks passed")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_check(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"spectral computation failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DecoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
