"""Replicated runs, speedup metrics, analytic oracles and parameter sweeps."""

from __future__ import annotations

import itertools
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .kernel import SimulationError
from .pipeline import PipelineNet, SimConfig

DEFAULT_REPLICATIONS = 30
DEFAULT_MAX_EVENTS = 10**9
Z95 = 1.96

# concrete model fields a sweep may vary
MODEL_AXES = ("W", "lambda_i", "mu_i", "p_bmis", "p_vmis")
# per-width axes: the intensity scales with W (lambda_i = value * W)
RATIO_AXES = {"lambda_per_w": "lambda_i", "mu_per_w": "mu_i"}
SWEEP_AXES = MODEL_AXES + tuple(RATIO_AXES)

# reference grid mirroring the published experiments; declared defaults
REFERENCE_AXES = {
    "W": [1, 2, 4, 8, 16, 32],
    "lambda_per_w": [0.1, 0.2],
    "mu_per_w": [0.25, 0.5],
    "p_bmis": [0.0, 0.02, 0.05, 0.1],
    "p_vmis": [0.0, 1.0],
}


class SimulationAbort(SimulationError):
    """A run hit its event or cycle cap, or a replication inside a batch failed."""

    def __init__(self, message: str, seed: Optional[int] = None):
        super().__init__(message)
        self.seed = seed


@dataclass(frozen=True)
class SimResult:
    cycles: int
    ipc: float
    branches_fired: int
    mispredictions: int
    stall_cycles: int
    consumers_fired: int
    value_mispredictions: int
    reexecutions: int
    rejected_jumps: int
    seed: int
    events: int = 0
    thresholds: int = 0

    def summary(self) -> str:
        keys = (
            "cycles",
            "ipc",
            "branches_fired",
            "mispredictions",
            "stall_cycles",
            "consumers_fired",
            "value_mispredictions",
            "reexecutions",
            "rejected_jumps",
            "seed",
        )
        lines = []
        for k in keys:
            v = getattr(self, k)
            lines.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines)


def _cycle_cap(config: SimConfig) -> int:
    per_cycle = config.W * max(1.0 - config.p_bmis, 1e-3)
    return int(100 * math.ceil(config.V / per_cycle) * (1 + config.C_BR)) + 1000


def run_simulation(
    config: SimConfig,
    *,
    max_events: int = DEFAULT_MAX_EVENTS,
    trace: Optional[Callable] = None,
    observer: Optional[Callable] = None,
    coalesce: bool = True,
    engine: str = "auto",
) -> SimResult:
    """Simulate one program run to absorption.

    ``engine`` is ``"reference"`` (generic event kernel), ``"fused"`` (the
    compiled loop in :mod:`ilpfspn.fastpath`) or ``"auto"``, which picks the
    fused loop unless a trace or observer is attached.  Both engines give
    identical results for the same config.

    ``trace`` receives ``(event, levels)`` after every event; ``observer``
    receives ``(net, event, raw_levels)`` with the pre-clamp levels.  Either
    one disables tick coalescing so that every clock tick is visible.
    """
    if engine not in ("auto", "fused", "reference"):
        raise ValueError(f"unknown engine {engine!r}")
    hooked = trace is not None or observer is not None
    if engine == "fused" and (hooked or not coalesce):
        raise ValueError("the fused engine supports neither hooks nor disabling coalescing")
    if engine == "fused" or (engine == "auto" and not hooked and coalesce):
        return _run_fused(config, max_events)
    net = PipelineNet(config)
    net.trace = trace
    net.observer = observer
    net.coalesce = coalesce
    try:
        net.run(max_events=max_events, max_cycles=_cycle_cap(config))
    except SimulationError as exc:
        if type(exc) is SimulationError:
            raise SimulationAbort(str(exc), config.seed) from exc
        raise
    return result_of(net)


def _run_fused(config: SimConfig, max_events: int) -> SimResult:
    from . import fastpath

    try:
        res, _ = fastpath.simulate_fused(config, max_events, _cycle_cap(config))
    except SimulationError as exc:
        if type(exc) is SimulationError:
            raise SimulationAbort(str(exc), config.seed) from exc
        raise
    cycles = int(res[fastpath.R_CYCLES])
    return SimResult(
        cycles=cycles,
        ipc=float(config.V) / cycles,
        branches_fired=int(res[fastpath.R_BRANCHES]),
        mispredictions=int(res[fastpath.R_MISPRED]),
        stall_cycles=int(res[fastpath.R_STALL]),
        consumers_fired=int(res[fastpath.R_CONSUMERS]),
        value_mispredictions=int(res[fastpath.R_VMIS]),
        reexecutions=int(res[fastpath.R_REEXEC]),
        rejected_jumps=int(res[fastpath.R_REJECTED]),
        seed=config.seed,
        events=int(res[fastpath.R_EVENTS]),
        thresholds=int(res[fastpath.R_THRESHOLDS]),
    )


def result_of(net: PipelineNet) -> SimResult:
    return SimResult(
        cycles=net.cycle,
        ipc=float(net.config.V) / net.cycle,
        branches_fired=net.branches_fired,
        mispredictions=net.mispredictions,
        stall_cycles=net.stall_cycles,
        consumers_fired=net.consumers_fired,
        value_mispredictions=net.value_mispredictions,
        reexecutions=net.reexecutions,
        rejected_jumps=net.rejected_jumps,
        seed=net.config.seed,
        events=net.stats.events,
        thresholds=net.stats.thresholds,
    )


def _ipc_of(x) -> float:
    return x.mean_ipc if isinstance(x, ReplicationStats) else x.ipc


def compute_speedup(measured, baseline) -> float:
    """IPC of a machine over the IPC of its scalar counterpart."""
    base = _ipc_of(baseline)
    if base <= 0.0:
        raise ValueError("baseline IPC is zero")
    return _ipc_of(measured) / base


def additional_vp_speedup(with_vp, without_vp) -> float:
    """IPC with perfect value prediction over IPC without value prediction."""
    return compute_speedup(with_vp, without_vp)


def vp_speedup_bound(W: int, mu_i: float) -> float:
    """Upper bound on the value-prediction gain, ``W / (W - mu_i)``."""
    if mu_i < 0 or mu_i >= W:
        raise ValueError(f"bound undefined for W={W}, mu_i={mu_i}")
    return W / (W - mu_i)


def scalar_renewal_ipc(lambda_i: float, p_bmis: float, C_BR: int) -> float:
    """Scalar IPC from alternating mean-1/(lambda_i p_bmis) fetch periods and C_BR stalls."""
    return 1.0 / (1.0 + lambda_i * p_bmis * C_BR)


def scalar_baseline(config: SimConfig) -> SimConfig:
    """Scalar counterpart: width 1, no consumers, same branch behaviour and volume."""
    return config.replace(W=1, mu_i=0.0)


@dataclass(frozen=True)
class ReplicationStats:
    n: int
    mean_ipc: float
    ci_halfwidth: float
    results: tuple[SimResult, ...]
    base_seed: int = 0

    @property
    def ipc(self) -> float:
        return self.mean_ipc

    @classmethod
    def from_results(cls, results: Sequence[SimResult], base_seed: int = 0) -> "ReplicationStats":
        ipcs = [r.ipc for r in results]
        n = len(ipcs)
        mean = math.fsum(ipcs) / n
        half = Z95 * statistics.stdev(ipcs) / math.sqrt(n) if n >= 2 else 0.0
        return cls(n, mean, half, tuple(results), base_seed)


def _run_seeded(args) -> SimResult:
    config, max_events = args
    return run_simulation(config, max_events=max_events)


def _map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_replications(
    config: SimConfig,
    n: int = DEFAULT_REPLICATIONS,
    base_seed: int = 0,
    *,
    jobs: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> ReplicationStats:
    """``n`` runs with seeds ``base_seed .. base_seed + n - 1``; results kept in seed order."""
    if n < 1:
        raise ValueError("n must be at least 1")
    configs = [config.replace(seed=base_seed + k) for k in range(n)]
    return ReplicationStats.from_results(_run_batch(configs, jobs, max_events), base_seed)


def _run_batch(configs: list[SimConfig], jobs: int, max_events: int) -> list[SimResult]:
    if jobs <= 1:
        out = []
        for cfg in configs:
            try:
                out.append(run_simulation(cfg, max_events=max_events))
            except SimulationError as exc:
                raise SimulationAbort(f"replication with seed {cfg.seed} failed: {exc}", cfg.seed) from exc
        return out
    try:
        return _map(_run_seeded, [(c, max_events) for c in configs], jobs)
    except SimulationError as exc:
        seed = getattr(exc, "seed", None)
        raise SimulationAbort(f"replication with seed {seed} failed: {exc}", seed) from exc


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    point: Mapping[str, float]
    config: SimConfig
    stats: ReplicationStats
    baseline_ipc: Optional[float] = None
    speedup: Optional[float] = None
    additional_speedup: Optional[float] = None


@dataclass
class SweepTable:
    axes: dict[str, list]
    rows: list[SweepRow]
    base_seed: int
    n: int
    baseline_runs: int = 0
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        if name in ("mean_ipc", "ci_halfwidth"):
            return [getattr(r.stats, name) for r in self.rows]
        return [getattr(r, name) for r in self.rows]

    def select(self, **fixed) -> list[SweepRow]:
        """Rows whose axis coordinates match all of ``fixed``."""
        return [r for r in self.rows if all(r.point.get(k) == v for k, v in fixed.items())]


def resolve_point(fixed: SimConfig, point: Mapping[str, float]) -> SimConfig:
    """Concrete config for one grid point; per-width axes are scaled by the point's W."""
    changes = {k: v for k, v in point.items() if k in MODEL_AXES}
    if "W" in changes:
        changes["W"] = int(changes["W"])
    W = changes.get("W", fixed.W)
    for axis, target in RATIO_AXES.items():
        if axis in point:
            changes[target] = float(point[axis]) * W
    return fixed.replace(**changes)


def baseline_config(fixed: SimConfig, point: Mapping[str, float]) -> SimConfig:
    """Scalar counterpart of a grid point, shared by every W of the sweep.

    The point is resolved at W = 1, so absolute axes keep their value and
    per-width axes keep the per-instruction frequency (``lambda_per_w = 0.2``
    gives a baseline ``lambda_i`` of 0.2).  Consumers are removed, which also
    makes ``p_vmis`` irrelevant; it is pinned to 0 so that the VP siblings
    share one baseline.
    """
    return scalar_baseline(resolve_point(fixed, {**point, "W": 1})).replace(p_vmis=0.0)


def _validate_axes(axes: Mapping[str, Sequence]) -> dict[str, list]:
    if not axes:
        raise ValueError("sweep needs at least one axis")
    out = {}
    for name, values in axes.items():
        if name not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {name!r}")
        values = list(values)
        if not values:
            raise ValueError(f"sweep axis {name!r} is empty")
        out[name] = values
    for ratio, target in RATIO_AXES.items():
        if ratio in out and target in out:
            raise ValueError(f"axes {ratio!r} and {target!r} are mutually exclusive")
    return out


def sweep(
    axes: Mapping[str, Sequence],
    fixed_config: SimConfig,
    n: int = DEFAULT_REPLICATIONS,
    base_seed: int = 0,
    *,
    baseline: bool = True,
    jobs: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
    progress: Optional[Callable[[str], None]] = None,
) -> SweepTable:
    """Run every grid point of ``axes`` (itertools.product order) with ``n`` replications.

    With ``baseline`` set, the scalar counterpart (see :func:`baseline_config`)
    is run once per distinct baseline config and shared by all widths.  ``additional_speedup`` is
    filled for ``p_vmis == 0`` rows whose ``p_vmis == 1`` sibling is in the grid.
    """
    axes = _validate_axes(axes)
    names = list(axes)
    points = [dict(zip(names, combo)) for combo in itertools.product(*axes.values())]
    configs = [resolve_point(fixed_config, p) for p in points]
    base_of = [baseline_config(fixed_config, p) for p in points]

    stats_by_config: dict[SimConfig, ReplicationStats] = {}
    baselines: dict[SimConfig, ReplicationStats] = {}
    todo = list(dict.fromkeys(configs))
    if baseline:
        base_todo = list(dict.fromkeys(base_of))
    else:
        base_todo = []
    flat = [c.replace(seed=base_seed + k) for c in todo + base_todo for k in range(n)]
    if progress:
        progress(f"{len(todo)} grid configs, {len(base_todo)} baselines, {len(flat)} runs")
    results = _run_batch(flat, jobs, max_events)
    for j, cfg in enumerate(todo + base_todo):
        st = ReplicationStats.from_results(results[j * n:(j + 1) * n], base_seed)
        (stats_by_config if j < len(todo) else baselines)[cfg] = st

    rows = []
    for p, cfg, base_cfg in zip(points, configs, base_of):
        st = stats_by_config[cfg]
        b_ipc = sp = None
        if baseline:
            b_ipc = baselines[base_cfg].mean_ipc
            sp = st.mean_ipc / b_ipc
        add = None
        if cfg.p_vmis == 0.0:
            sibling = stats_by_config.get(cfg.replace(p_vmis=1.0))
            if sibling is not None:
                add = additional_vp_speedup(st, sibling)
        rows.append(SweepRow(p, cfg, st, b_ipc, sp, add))
    return SweepTable(axes, rows, base_seed, n, len(base_todo), {"baseline_shared_across_W": baseline})
