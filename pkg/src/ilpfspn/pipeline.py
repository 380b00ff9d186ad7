"""Fluid stochastic Petri net of a speculative ILP pipeline.

Fluid places (instructions): instruction cache ``P_IC``, instruction buffer
``P_IB``, reservation stations / load-store queue ``P_RS/LSQ``, reorder buffer
``P_ROB``, rename registers ``P_RR``, executed instructions ``P_EX`` and
architectural registers ``P_REG``.  ROB and RR hold occupied entries and
mirror ``RS + EX``; the other five places partition the program volume.

Discrete places: ``P_FETCH`` (fetch enabled), ``P_BMIS`` / ``P_RESOLVED``
(branch-resolution countdown), ``P_INITIATE`` (always marked) and ``P_VMIS``
(value mispredictions awaiting re-execution).  A ``P_VMIS`` token whose jump
cannot be carried out either waits until the jump becomes possible
(``defer_reexecution``, the default) or is discarded on the spot.

Per-cycle rates follow a downstream-first policy: each stage drains at most
``min(W, level)`` and accepts at most ``capacity - level + outflow``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .kernel import EPS, FluidNet, RngStream, SimulationError, resolve_immediate_conflict, reschedule_exponential

IC, IB, RS, ROB, RR, EX, REG = range(7)
PLACE_NAMES = ("P_IC", "P_IB", "P_RS/LSQ", "P_ROB", "P_RR", "P_EX", "P_REG")

T_BRANCH = "T_BRANCH"
T_CONSUMER = "T_CONSUMER"

STREAMS = ("branch-timing", "branch-outcome", "consumer-timing", "consumer-outcome")

# accumulated rounding allowed in the volume balance, per 10**6 instructions
CONSERVATION_TOL = 1e-6


class ConfigError(ValueError):
    """Invalid model parameter; ``field`` names the offending SimConfig field."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


class ConservationError(SimulationError):
    pass


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class SimConfig:
    W: int = 4
    V: float = 1e6
    lambda_i: float = 0.0
    mu_i: float = 0.0
    p_bmis: float = 0.0
    p_vmis: float = 0.0
    C_BR: int = 3
    buffer_capacity: Optional[float] = None
    pass_through: bool = False
    defer_reexecution: bool = True
    seed: int = 0

    def __post_init__(self):
        if not _is_int(self.W) or self.W <= 0:
            raise ConfigError("W", f"W must be a positive integer, got {self.W!r}")
        if not _is_real(self.V) or self.V <= 0:
            raise ConfigError("V", f"V must be a positive real, got {self.V!r}")
        for name in ("lambda_i", "mu_i"):
            value = getattr(self, name)
            if not _is_real(value) or value < 0:
                raise ConfigError(name, f"{name} must be a non-negative real, got {value!r}")
        for name in ("p_bmis", "p_vmis"):
            value = getattr(self, name)
            if not _is_real(value) or not 0.0 <= value <= 1.0:
                raise ConfigError(name, f"{name} out of [0,1]: {value!r}")
        if not _is_int(self.C_BR) or self.C_BR <= 0:
            raise ConfigError("C_BR", f"C_BR must be a positive integer, got {self.C_BR!r}")
        if self.buffer_capacity is not None and (
            not _is_real(self.buffer_capacity) or self.buffer_capacity <= 0
        ):
            raise ConfigError(
                "buffer_capacity", f"buffer_capacity must be a positive real, got {self.buffer_capacity!r}"
            )
        for name in ("pass_through", "defer_reexecution"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(name, f"{name} must be a boolean, got {getattr(self, name)!r}")
        if not _is_int(self.seed) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    @property
    def capacity(self) -> float:
        """Per-buffer capacity; twice the machine width unless set explicitly."""
        return float(2 * self.W if self.buffer_capacity is None else self.buffer_capacity)

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class FluidMarking:
    x_IC: float
    x_IB: float
    x_RS: float
    x_ROB: float
    x_RR: float
    x_EX: float
    x_REG: float

    @classmethod
    def from_levels(cls, levels) -> "FluidMarking":
        return cls(*levels)

    def as_levels(self) -> list[float]:
        return [self.x_IC, self.x_IB, self.x_RS, self.x_ROB, self.x_RR, self.x_EX, self.x_REG]


@dataclass(frozen=True)
class DiscreteMarking:
    fetch_token: int = 1
    initiate_token: int = 1
    bmis_tokens: int = 0
    resolved_tokens: int = 0
    vmis_pending: int = 0


@dataclass(frozen=True)
class PipelineRates:
    r_fetch: float
    r_issue: float
    r_initiate: float
    r_complete: float
    r_commit: float
    lam: float
    mu: float


def _stage_rates(levels, fetching: bool, W: float, cap: float, pass_through: bool):
    x_ic, x_ib, x_rs, x_rob, x_rr, x_ex = levels[0], levels[1], levels[2], levels[3], levels[4], levels[5]
    if not pass_through:
        c = min(W, x_ex)
        i = min(W, x_rs, cap - x_ex + c)
        s = min(W, x_ib, cap - x_rs + i, cap - x_rob + c, cap - x_rr + c)
        f = min(W, x_ic, cap - x_ib + s) if fetching else 0.0
        return f, s, i, c
    # pass-through: outflow may include same-cycle inflow; alternate supply
    # (upstream-first) and room (downstream-first) passes until nothing shrinks
    f = min(W, x_ic) if fetching else 0.0
    s = i = c = W
    for _ in range(16):
        s1 = min(s, x_ib + f)
        i1 = min(i, x_rs + s1)
        c1 = min(c, x_ex + i1)
        i1 = min(i1, cap - x_ex + c1)
        s1 = min(s1, cap - x_rs + i1, cap - x_rob + c1, cap - x_rr + c1)
        f1 = min(f, cap - x_ib + s1)
        if (f1, s1, i1, c1) == (f, s, i, c):
            break
        f, s, i, c = f1, s1, i1, c1
    else:
        raise SimulationError("pass-through rate iteration did not settle")
    return f, s, i, c


def compute_cycle_rates(marking: FluidMarking, discrete: DiscreteMarking, config: SimConfig) -> PipelineRates:
    """Stage rates for the coming cycle plus the branch and consumer intensities."""
    W = config.W
    f, s, i, c = _stage_rates(
        marking.as_levels(), discrete.fetch_token == 1, W, config.capacity, config.pass_through
    )
    f, s, i, c = (max(0.0, x) for x in (f, s, i, c))
    return PipelineRates(
        r_fetch=f,
        r_issue=s,
        r_initiate=i,
        r_complete=i,
        r_commit=c,
        lam=config.lambda_i * f / W,
        mu=config.mu_i * i / W,
    )


def _net_rates(f: float, s: float, i: float, c: float) -> list[float]:
    out_rs = s - c
    return [-f, f - s, s - i, out_rs, out_rs, i - c, c]


class PipelineNet(FluidNet):
    """The ILP-processor net; one instance is one simulation run."""

    def __init__(self, config: SimConfig):
        cap = config.capacity
        super().__init__(
            PLACE_NAMES,
            [math.inf, cap, cap, cap, cap, cap, math.inf],
            [float(config.V), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )
        self.config = config
        self._W = float(config.W)
        self._cap = cap
        self.rng = {name: RngStream(config.seed, name) for name in STREAMS}
        self._branch_weights = (1.0 - config.p_bmis, config.p_bmis)
        self._vp_weights = (1.0 - config.p_vmis, config.p_vmis)

        self.fetch_token = 1
        self.initiate_token = 1
        self.bmis_tokens = 0
        self.resolved_tokens = 0
        self.vmis_pending = 0
        self.stage = (0.0, 0.0, 0.0, 0.0)
        self.lam = 0.0
        self.mu = 0.0
        self.steady = False

        self.branches_fired = 0
        self.mispredictions = 0
        self.stall_cycles = 0
        self.consumers_fired = 0
        self.value_mispredictions = 0
        self.reexecutions = 0
        self.rejected_jumps = 0

        self._install(self._stage_rates())

    # -- views --------------------------------------------------------------

    @property
    def marking(self) -> FluidMarking:
        return FluidMarking.from_levels(self.levels)

    @property
    def discrete(self) -> DiscreteMarking:
        return DiscreteMarking(
            self.fetch_token, self.initiate_token, self.bmis_tokens, self.resolved_tokens, self.vmis_pending
        )

    @property
    def pipeline_rates(self) -> PipelineRates:
        f, s, i, c = self.stage
        return PipelineRates(f, s, i, i, c, self.lam, self.mu)

    # -- rate plumbing ------------------------------------------------------

    def _stage_rates(self):
        f, s, i, c = _stage_rates(self.levels, self.fetch_token == 1, self._W, self._cap, self.config.pass_through)
        # rounding can leave -1e-16 where a buffer is exactly full
        return (f if f > 0.0 else 0.0, s if s > 0.0 else 0.0, i if i > 0.0 else 0.0, c if c > 0.0 else 0.0)

    def _install(self, stage) -> None:
        self.stage = stage
        f, s, i, c = stage
        self.set_rates(_net_rates(f, s, i, c))
        cfg = self.config
        lam = cfg.lambda_i * f / self._W
        mu = cfg.mu_i * i / self._W
        if lam != self.lam or (lam > 0.0 and T_BRANCH not in self.queue):
            self.lam = lam
            reschedule_exponential(self.queue, T_BRANCH, lam, self.now, self.rng["branch-timing"])
        if mu != self.mu or (mu > 0.0 and T_CONSUMER not in self.queue):
            self.mu = mu
            reschedule_exponential(self.queue, T_CONSUMER, mu, self.now, self.rng["consumer-timing"])

    # -- handlers -------------------------------------------------------------

    def on_clock(self):
        fired = []
        if self.bmis_tokens > 0:
            self.bmis_tokens -= 1
            self.resolved_tokens += 1
            self.stall_cycles += 1
            if self.bmis_tokens == 0 and self.resolved_tokens == self.config.C_BR:
                fired.append("T_CONTINUE")
                self.fetch_token = 1
                self.resolved_tokens = 0
        stage = self._stage_rates()
        self._install(stage)
        f, s, i, c = stage
        self.steady = f > 0.0 and f == s == i == c and self.bmis_tokens == 0
        if self.check_absorption():
            self.absorbed = True
            self.queue.cancel(T_BRANCH)
            self.queue.cancel(T_CONSUMER)
            # stranded P_VMIS tokens: no fluid is left to re-execute
            self.rejected_jumps += self.vmis_pending
            self.vmis_pending = 0
            fired.append("T_END")
        return tuple(fired)

    def on_timed(self, name):
        if name == T_BRANCH:
            return self.on_branch_fire(self.rng["branch-outcome"].uniform())
        if name == T_CONSUMER:
            return self.on_consumer_fire(self.rng["consumer-outcome"].uniform())
        raise SimulationError(f"unknown timed transition {name!r}")

    def on_branch_fire(self, u_outcome: float):
        self.branches_fired += 1
        if resolve_immediate_conflict(self._branch_weights, u_outcome) == 0:
            reschedule_exponential(self.queue, T_BRANCH, self.lam, self.now, self.rng["branch-timing"])
            return ("T_BPC",)
        self.mispredictions += 1
        self.fetch_token = 0
        self.bmis_tokens = self.config.C_BR
        self.steady = False
        _, s, i, c = self.stage
        # only fetch reacts mid-cycle; downstream rates were fixed at the tick
        self._install((0.0, s, i, c))
        return ("T_BPMIS",)

    def on_consumer_fire(self, u_outcome: float):
        self.consumers_fired += 1
        fired: tuple[str, ...]
        if resolve_immediate_conflict(self._vp_weights, u_outcome) == 0:
            fired = ("T_VPC",)
        else:
            self.value_mispredictions += 1
            fired = ("T_VPMIS",)
            if self.config.defer_reexecution:
                self.vmis_pending += 1
            elif self.jump(EX, RS, 1.0):
                self.reexecutions += 1
                self.steady = False
                fired += ("T_REEXECUTE",)
            else:
                self.rejected_jumps += 1
                fired += ("T_REEXECUTE(rejected)",)
        reschedule_exponential(self.queue, T_CONSUMER, self.mu, self.now, self.rng["consumer-timing"])
        return fired

    def fire_immediate(self):
        # T_REEXECUTE stays enabled while P_VMIS is marked and the jump fits
        fired = ()
        while self.vmis_pending and self.jump(EX, RS, 1.0):
            self.vmis_pending -= 1
            self.reexecutions += 1
            self.steady = False
            fired += ("T_REEXECUTE",)
        return fired

    def on_threshold(self, place):
        self.steady = False
        self._install(self._stage_rates())
        return ()

    def check_absorption(self) -> bool:
        """T_END: all fluid except P_REG drained and no stall episode pending."""
        lv = self.levels
        if lv[IC] > EPS or lv[IB] > EPS or lv[RS] > EPS or lv[EX] > EPS:
            return False
        if self.bmis_tokens or self.resolved_tokens:
            return False
        V = float(self.config.V)
        if abs(lv[REG] - V) > CONSERVATION_TOL * max(1.0, V / 1e6):
            raise ConservationError(f"absorbed with P_REG={lv[REG]!r}, expected V={V!r}")
        return True

    def stationary_ticks(self) -> int:
        # all buffers flat and no tokens moving: the next ticks recompute the
        # same rates for as long as P_IC still holds a full cycle's fetch
        if not self.steady:
            return 0
        f = self.stage[0]
        room = (self.levels[IC] - f) / f - (self.next_tick - self.now)
        if room < 0.0:
            return 0
        return int(room) + 1


def build_pipeline_net(config: SimConfig) -> PipelineNet:
    """Initial state: V in P_IC, fetch and initiate tokens present, first tick at t=1."""
    return PipelineNet(config)
