"""Monte-Carlo campaign runner: drops, CDFs, and percentile summaries.

Every drop derives its random streams from (base_seed, drop_id[, realization])
through a SplitMix64 mix, so campaigns are reproducible bit-for-bit no matter
how many workers execute them or in which order drops complete.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from io import StringIO

import numpy as np

from . import channel as ch
from . import estimation, scenario, tpc
from .errors import EmptyInput
from .metrics import SystemConfig

RESULT_COLUMNS = (
    "drop_id",
    "realization_id",
    "algorithm",
    "combiner",
    "ue_id",
    "se",
    "ee",
    "sinr",
    "q",
    "status",
)

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 scrambling round (64-bit)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(base_seed: int, *indices: int) -> int:
    """Derive a stream seed: scramble the base, then fold in each index.

    mix_seed(b, i1, i2, ...) = splitmix64(... splitmix64(splitmix64(b) ^ i1) ^ i2 ...)
    """
    h = splitmix64(base_seed & _MASK64)
    for ix in indices:
        h = splitmix64(h ^ (ix & _MASK64))
    return h


@dataclass(frozen=True)
class AlgorithmSpec:
    """One power-control run configuration; label defaults to the name."""

    name: str
    label: str | None = None
    target_se: float | None = None  # overrides TpcOptions.target_se (max_min_ee)

    def __post_init__(self) -> None:
        if self.name not in tpc.ALGORITHMS:
            raise ValueError(f"unknown TPC algorithm: {self.name!r}")
        if self.label is None:
            object.__setattr__(self, "label", self.name)


@dataclass
class CampaignSpec:
    """Everything needed to reproduce one Monte-Carlo campaign."""

    L: int = 64
    N: int = 1
    K: int = 8
    drops: int = 200
    realizations_per_drop: int = 1
    base_seed: int = 1
    area: scenario.AreaSpec = field(default_factory=scenario.AreaSpec)
    system: SystemConfig = field(default_factory=SystemConfig)
    path_loss: ch.PathLossModel = ch.ADJUSTED_MODEL
    ap_mode: str = "random"
    ue_mode: str = "spread"
    cluster_radius: float = 15.0
    indoor_fraction: float = 0.0
    indoor_penalty_db: float = ch.DEFAULT_INDOOR_PENALTY_DB
    min_antenna_spacing: float = scenario.DEFAULT_MIN_SPACING
    channel_source: str = "synthetic"  # or a measured-dataset path
    csi: str = "mmse"  # or "perfect"
    combiners: tuple[str, ...] = ("mmse",)
    algorithms: tuple[AlgorithmSpec, ...] = (
        AlgorithmSpec("max_power"),
        AlgorithmSpec("max_min_se"),
        AlgorithmSpec("max_min_ee"),
    )
    tpc_options: tpc.TpcOptions = field(default_factory=tpc.TpcOptions)

    @property
    def M(self) -> int:
        return self.L * self.N

    def __post_init__(self) -> None:
        if self.drops < 1 or self.realizations_per_drop < 1:
            raise ValueError("drops and realizations_per_drop must be >= 1")
        if self.csi not in ("mmse", "perfect"):
            raise ValueError(f"unknown CSI mode: {self.csi!r}")
        for comb in self.combiners:
            if comb not in ("mr", "mmse"):
                raise ValueError(f"unknown combiner: {comb!r}")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ValueError("algorithm labels must be unique")


@dataclass
class ResultRow:
    drop_id: int
    realization_id: int
    algorithm: str
    combiner: str
    ue_id: int
    se: float
    ee: float
    sinr: float
    q: float
    status: str


class ResultTable:
    """Row container with a fixed-column CSV serialization."""

    def __init__(self, rows: list[ResultRow]):
        self.rows = rows

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        out = StringIO()
        out.write(",".join(RESULT_COLUMNS) + "\n")
        for r in self.rows:
            out.write(
                f"{r.drop_id},{r.realization_id},{r.algorithm},{r.combiner},"
                f"{r.ue_id},{r.se!r},{r.ee!r},{r.sinr!r},{r.q!r},{r.status}\n"
            )
        return out.getvalue()

    def select(self, algorithm: str | None = None, combiner: str | None = None):
        return [
            r
            for r in self.rows
            if (algorithm is None or r.algorithm == algorithm)
            and (combiner is None or r.combiner == combiner)
        ]


_dataset_cache: dict[str, ch.MeasuredDataset] = {}


def _measured_dataset(path: str) -> ch.MeasuredDataset:
    if path not in _dataset_cache:
        _dataset_cache[path] = ch.load_measured(path)
    return _dataset_cache[path]


def _algorithm_options(spec: CampaignSpec, alg: AlgorithmSpec) -> tpc.TpcOptions:
    if alg.target_se is None:
        return spec.tpc_options
    return replace(spec.tpc_options, target_se=alg.target_se)


def run_drop(spec: CampaignSpec, drop_id: int) -> list[ResultRow]:
    """Generate one drop and run every (algorithm, combiner) pair on it.

    The topology and large-scale gains use the stream mix(base_seed, drop_id, 0);
    realization r uses mix(base_seed, drop_id, r + 1). Every pair sees the
    identical channel state. Infeasible solves produce zero-metric rows with
    their status recorded rather than aborting the drop.
    """
    sysconf = spec.system
    rho = sysconf.rho
    tau_p = sysconf.tau_p if sysconf.tau_p is not None else spec.K
    topo_rng = np.random.default_rng(mix_seed(spec.base_seed, drop_id, 0))

    indoor_applied = False
    if spec.channel_source == "synthetic":
        topo = scenario.make_topology(
            spec.area,
            spec.L,
            spec.N,
            spec.K,
            ap_mode=spec.ap_mode,
            ue_mode=spec.ue_mode,
            cluster_radius=spec.cluster_radius,
            indoor_fraction=spec.indoor_fraction,
            min_spacing=spec.min_antenna_spacing,
            rng=topo_rng,
        )
        beta = ch.draw_large_scale(topo, spec.path_loss, topo_rng, spec.indoor_penalty_db)
        measured_links = None
        indoor_applied = bool(topo.ues.indoor.any())
    else:
        dataset = _measured_dataset(spec.channel_source)
        if dataset.M_locations < spec.M or dataset.K_locations < spec.K:
            raise ValueError("measured dataset has fewer locations than the campaign needs")
        sel_m = topo_rng.choice(dataset.M_locations, size=spec.M, replace=False)
        sel_k = topo_rng.choice(dataset.K_locations, size=spec.K, replace=False)
        measured_links = dataset.coefficients[np.ix_(sel_m, sel_k)]
        beta = np.mean(np.abs(measured_links) ** 2, axis=2)

    rows: list[ResultRow] = []
    for r in range(spec.realizations_per_drop):
        real_rng = np.random.default_rng(mix_seed(spec.base_seed, drop_id, r + 1))
        if measured_links is None:
            H = ch.realize(beta, ch.draw_small_scale(spec.M, spec.K, real_rng))
        else:
            H = measured_links[:, :, r % measured_links.shape[2]]
        if spec.csi == "perfect":
            H_hat, err_var = estimation.perfect_csi(H)
        else:
            H_hat, err_var = estimation.pilot_mmse_csi(H, beta, sysconf.rho_p, tau_p, real_rng)
        state = ch.ChannelState(
            H=H, beta=beta, H_hat=H_hat, err_var=err_var, indoor_penalty_applied=indoor_applied
        )

        for alg in spec.algorithms:
            opts = _algorithm_options(spec, alg)
            for comb in spec.combiners:
                result = tpc.solve(alg.name, state.H_hat, state.err_var, rho, comb, sysconf, opts)
                m = result.metrics
                for k in range(spec.K):
                    rows.append(
                        ResultRow(
                            drop_id=drop_id,
                            realization_id=r,
                            algorithm=alg.label,
                            combiner=comb,
                            ue_id=k,
                            se=float(m.se[k]),
                            ee=float(m.ee[k]),
                            sinr=float(m.sinr[k]),
                            q=float(result.q[k]),
                            status=result.status,
                        )
                    )
    return rows


def empirical_cdf(values) -> list[tuple[float, float]]:
    """Sorted (value, cumulative fraction) pairs with the midpoint convention."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise EmptyInput("cannot build a CDF from no values")
    order = np.sort(values)
    fracs = (np.arange(values.size) + 0.5) / values.size
    return list(zip(order.tolist(), fracs.tolist()))


def percentile(cdf: list[tuple[float, float]], p: float) -> float:
    """p-th percentile of the sample behind a CDF, linearly interpolated.

    Uses the linear rank convention: rank = p/100 * (n - 1) over the sorted
    sample. The "95%-likely" value of a metric is percentile(cdf, 5).
    """
    if not cdf:
        raise EmptyInput("cannot take a percentile of an empty CDF")
    if not 0.0 <= p <= 100.0:
        raise ValueError("p must lie in [0, 100]")
    values = [v for v, _ in cdf]
    n = len(values)
    pos = p / 100.0 * (n - 1)
    lo = int(np.floor(pos))
    hi = int(np.ceil(pos))
    if lo == hi:
        return values[lo]
    w = pos - lo
    return values[lo] * (1.0 - w) + values[hi] * w


def summarize(table: ResultTable) -> dict:
    """Per-(algorithm, combiner) medians, 95%-likely values, infeasible share."""
    summary: dict = {}
    pairs = sorted({(r.algorithm, r.combiner) for r in table.rows})
    for alg, comb in pairs:
        rows = table.select(alg, comb)
        se_cdf = empirical_cdf([r.se for r in rows])
        ee_cdf = empirical_cdf([r.ee for r in rows])
        infeasible = sum(1 for r in rows if r.status == tpc.STATUS_INFEASIBLE)
        summary.setdefault(alg, {})[comb] = {
            "median_se": percentile(se_cdf, 50),
            "p95_se": percentile(se_cdf, 5),
            "median_ee": percentile(ee_cdf, 50),
            "p95_ee": percentile(ee_cdf, 5),
            "infeasible_fraction": infeasible / len(rows),
        }
    return summary


def _run_drop_task(args):
    spec, drop_id = args
    return drop_id, run_drop(spec, drop_id)


def run_campaign(spec: CampaignSpec, workers: int = 1) -> tuple[ResultTable, dict]:
    """Run all drops, canonically ordered, and compute the summary tree.

    Drops are independent work units; with workers > 1 they execute in a
    process pool. Output is identical for any worker count.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    drop_ids = list(range(spec.drops))
    if workers == 1 or spec.drops == 1:
        results = [(d, run_drop(spec, d)) for d in drop_ids]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_drop_task, [(spec, d) for d in drop_ids]))
    results.sort(key=lambda item: item[0])
    rows: list[ResultRow] = []
    for _, drop_rows in results:
        rows.extend(drop_rows)
    rows.sort(key=lambda r: (r.drop_id, r.realization_id))
    table = ResultTable(rows)
    return table, summarize(table)
