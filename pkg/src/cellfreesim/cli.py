"""Command-line front end: campaign runs, oracle checks, path-loss fitting.

Exit codes: 0 on success, 2 for configuration problems (bad file, bad flag
combination, unknown keys), 3 for runtime failures. Campaign outputs are
plain files: results.csv, summary.json, and two-column CDF files per
(algorithm, combiner) pair, ready for any plotting tool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import channel as ch
from . import config as cfgmod
from . import harness, tpc
from .errors import CellFreeSimError, ConfigError, TooManyUEs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

WORKERS_ENV = "CELLFREESIM_WORKERS"


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return value


def _load(config_path: str | None, profile: str) -> dict:
    """Profile defaults first, then any file on top of them."""
    if config_path is None:
        return cfgmod.default_config(profile)
    return cfgmod.load_config(config_path, profile)


def cmd_run(
    config_path: str | None,
    out_dir: str,
    workers: int = 1,
    seed: int | None = None,
    profile: str = "paper",
) -> list[Path]:
    """Run a campaign and write results.csv, summary.json, and CDF files.

    Partially written outputs are removed if the run fails.
    """
    cfg = _load(config_path, profile)
    spec = cfgmod.build_campaign(cfg, seed_override=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        table, summary = harness.run_campaign(spec, workers=workers)

        results_path = out / "results.csv"
        results_path.write_text(table.to_csv())
        written.append(results_path)

        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        written.append(summary_path)

        pairs = sorted({(r.algorithm, r.combiner) for r in table.rows})
        for alg, comb in pairs:
            rows = table.select(alg, comb)
            for metric in ("se", "ee"):
                cdf = harness.empirical_cdf([getattr(r, metric) for r in rows])
                path = out / f"cdf_{metric}_{alg}_{comb}.csv"
                path.write_text("".join(f"{v!r} {f!r}\n" for v, f in cdf))
                written.append(path)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written


def cmd_oracle(
    config_path: str | None,
    profile: str = "paper",
    instances: int = 20,
    tol_se: float = 1e-2,
    tol_ee: float = 1e-2,
) -> str:
    """Compare the max-min solvers against the brute-force grid oracle.

    Builds `instances` random channel states at the configured size (at most
    3 UEs) and reports per-instance objective gaps for max-min SE (absolute,
    bits/s/Hz) and max-min EE (relative) against the given tolerances.
    Returns the textual report.
    """
    cfg = _load(config_path, profile)
    K = cfg["deployment"]["num_ues"]
    if K > 3:
        raise TooManyUEs(f"oracle runs need num_ues <= 3, got {K}")
    M = cfg["deployment"]["num_aps"] * cfg["deployment"]["antennas_per_ap"]
    system = cfgmod.system_config(cfg)
    target_se = cfg["campaign"]["target_se"]
    opts = tpc.TpcOptions(target_se=target_se, **cfg["tpc"])
    rng = np.random.default_rng(cfg["campaign"]["base_seed"])

    lines = [f"oracle comparison: {instances} instances, M={M}, K={K}, MR, perfect CSI"]
    worst_se = 0.0
    worst_ee = 0.0
    failures = 0
    rho = system.rho
    for i in range(instances):
        # full-power single-UE SNRs of a few tens keep the optimum where a
        # 201-point grid resolves it
        snr_full = 10.0 ** rng.uniform(np.log10(5.0), np.log10(50.0), size=K)
        beta = snr_full / (M * rho)
        H = np.sqrt(beta) * (
            (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / np.sqrt(2.0)
        )
        err_var = np.zeros((M, K))

        res_se = tpc.max_min_se(H, err_var, rho, "mr", system, opts)
        q_oracle = tpc.brute_force_oracle(H, err_var, rho, "mr", "min_se")
        se_solver = float(np.min(res_se.metrics.se))
        sinr_o = tpc.grid_sinr(tpc.build_weights("mr", H, err_var, q_oracle, rho).W, H, err_var, rho, q_oracle)
        se_oracle = float(np.min(np.log2(1.0 + sinr_o)))
        gap_se = abs(se_solver - se_oracle)
        worst_se = max(worst_se, gap_se)

        res_ee = tpc.max_min_ee(H, err_var, rho, "mr", system, opts)
        q_oracle_ee = tpc.brute_force_oracle(
            H, err_var, rho, "mr", "min_ee", target_se=target_se, config=system
        )
        ee_solver = float(np.min(res_ee.metrics.ee))
        sinr_oe = tpc.grid_sinr(
            tpc.build_weights("mr", H, err_var, q_oracle_ee, rho).W, H, err_var, rho, q_oracle_ee
        )
        se_oe = np.log2(1.0 + sinr_oe).ravel()
        ee_oracle = float(
            np.min(system.bandwidth * se_oe / (system.p_max * np.max(q_oracle_ee) + system.p_circuit))
        )
        gap_ee = abs(ee_solver - ee_oracle) / max(ee_oracle, 1e-12)
        worst_ee = max(worst_ee, gap_ee)

        ok = gap_se <= tol_se and gap_ee <= tol_ee
        failures += 0 if ok else 1
        lines.append(
            f"instance {i:2d}: min-SE solver {se_solver:.4f} oracle {se_oracle:.4f} "
            f"(gap {gap_se:.2e}); min-EE gap {gap_ee * 100:.3f}% "
            f"{'PASS' if ok else 'FAIL'}"
        )
    lines.append(
        f"worst gaps: min-SE {worst_se:.2e} bits/s/Hz, min-EE {worst_ee * 100:.3f}%; "
        f"{instances - failures}/{instances} PASS"
    )
    return "\n".join(lines)


def cmd_fit(dataset_path: str) -> ch.PathLossModel:
    """Fit a path-loss model to a measured dataset with coordinates."""
    dataset = ch.load_measured(dataset_path)
    return ch.fit_path_loss(dataset)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellfreesim",
        description="Uplink cell-free massive MIMO simulation lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo campaign")
    run.add_argument("--config", metavar="PATH", default=None, help="TOML configuration file")
    run.add_argument("--out", metavar="DIR", required=True, help="output directory")
    run.add_argument("--workers", type=int, default=None, metavar="N", help=f"worker processes (default ${WORKERS_ENV} or 1)")
    run.add_argument("--seed", type=int, default=None, metavar="U64", help="override the base seed")
    run.add_argument("--profile", choices=sorted(cfgmod.PROFILES), default="paper")

    oracle = sub.add_parser("oracle", help="check the solvers against the grid oracle")
    oracle.add_argument("--config", metavar="PATH", default=None)
    oracle.add_argument("--profile", choices=sorted(cfgmod.PROFILES), default="paper")
    oracle.add_argument("--instances", type=int, default=20)
    oracle.add_argument("--tol-se", type=float, default=1e-2, help="min-SE gap tolerance (bits/s/Hz)")
    oracle.add_argument("--tol-ee", type=float, default=1e-2, help="min-EE relative gap tolerance")

    fit = sub.add_parser("fit", help="fit a path-loss model to a measured dataset")
    fit.add_argument("dataset", metavar="PATH")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            workers = args.workers if args.workers is not None else _default_workers()
            if workers < 1:
                raise ConfigError("--workers must be >= 1")
            written = cmd_run(args.config, args.out, workers=workers, seed=args.seed, profile=args.profile)
            for path in written:
                print(path)
        elif args.command == "oracle":
            print(
                cmd_oracle(
                    args.config,
                    profile=args.profile,
                    instances=args.instances,
                    tol_se=args.tol_se,
                    tol_ee=args.tol_ee,
                )
            )
        elif args.command == "fit":
            model = cmd_fit(args.dataset)
            print(
                json.dumps(
                    {
                        "intercept_db": model.intercept,
                        "slope_db_per_decade": model.slope,
                        "reference_distance_m": model.reference_distance,
                        "shadow_sigma_db": model.shadow_sigma,
                    },
                    indent=2,
                )
            )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CellFreeSimError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
