"""
Countermeasures against delay attacks.

Guaranteed clock-offset bounds from minimum one-way delay knowledge, the RTD
gate, strict replay protection, padding and timing randomization.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Tuple

import numpy as np

from ptpdelay.netmodel import EncryptionScheme
from ptpdelay.ptp import (
    CycleTiming,
    EngineConfig,
    MessageKind,
    SyncCycle,
    TimingSource,
    compute_rtd,
)
from ptpdelay.simcore import PPM, to_fraction, trunc_div

logger = logging.getLogger(__name__)

__all__ = [
    "ConstraintViolationError",
    "PaddingError",
    "OwdConstraints",
    "OffsetBound",
    "SystemBoundParams",
    "bound_offset",
    "midpoint_offset",
    "residual_uncertainty",
    "system_bound",
    "rtd_gate",
    "RtdGate",
    "ReplayPolicy",
    "ReplayWindow",
    "replay_check",
    "PaddingPolicy",
    "apply_padding",
    "TimingRandomization",
    "randomize_timing",
    "timing_source",
    "RoundTripComparator",
    "RoundTripCheck",
]


class ConstraintViolationError(ValueError):
    """Raised when a measured RTD is smaller than the sum of minimum OWDs."""


class PaddingError(ValueError):
    """Raised when a padding policy cannot be realised by the scheme."""


def ceil_div(num: int, den: int) -> int:
    return -(-num // den)


@dataclass(frozen=True)
class OwdConstraints:
    d_min_ms: int = 0
    d_min_sm: int = 0

    def __post_init__(self):
        if self.d_min_ms < 0 or self.d_min_sm < 0:
            raise ValueError("minimum one-way delays must be non-negative")

    @property
    def total(self) -> int:
        return self.d_min_ms + self.d_min_sm


@dataclass(frozen=True)
class OffsetBound:
    low: int
    high: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError("low {} exceeds high {}".format(self.low, self.high))

    def __contains__(self, offset) -> bool:
        return self.low <= offset <= self.high

    @property
    def midpoint(self) -> int:
        return trunc_div(self.low + self.high, 2)

    @property
    def width(self) -> int:
        return self.high - self.low

    def __str__(self):
        return "[{}, {}]".format(self.low, self.high)


@dataclass(frozen=True)
class SystemBoundParams:
    rtd_max: int
    t_interval: int
    rho: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "rho", to_fraction(self.rho))
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if self.t_interval <= 0:
            raise ValueError("t_interval must be positive")

    def validate(self, k: OwdConstraints) -> "SystemBoundParams":
        if self.rtd_max < k.total:
            raise ValueError(
                "rtd_max {} is below the minimum-OWD sum {}".format(self.rtd_max, k.total)
            )
        return self


def _checked_rtd(c: SyncCycle, k: OwdConstraints) -> int:
    rtd = compute_rtd(c)
    if rtd < k.total:
        raise ConstraintViolationError(
            "Cycle {}: RTD {} ns is below d_min_ms + d_min_sm = {} ns".format(
                c.seq, rtd, k.total
            )
        )
    return rtd


def bound_offset(c: SyncCycle, k: OwdConstraints) -> OffsetBound:
    """
    Interval that contains the true slave offset at the end of cycle ``c``.

    Sound against any adversary that only adds delay, as long as ``k`` does
    not exceed the real minimum path delays.
    """
    _checked_rtd(c, k)
    return OffsetBound(c.t_S3 - c.t_M4 + k.d_min_sm, c.t_S2 - c.t_M1 - k.d_min_ms)


def midpoint_offset(c: SyncCycle, k: OwdConstraints) -> int:
    return bound_offset(c, k).midpoint


def residual_uncertainty(c: SyncCycle, k: OwdConstraints) -> int:
    """Half-width of the bound, rounded up so that midpoint ± result covers it."""
    return ceil_div(_checked_rtd(c, k) - k.total, 2)


def system_bound(p: SystemBoundParams, k: OwdConstraints) -> OffsetBound:
    p.validate(k)
    drift = p.t_interval * p.rho * PPM
    half = ceil_div(p.rtd_max - k.total, 2) + ceil_div(drift.numerator, drift.denominator)
    return OffsetBound(-half, half)


def rtd_gate(c: SyncCycle, rtd_max: int) -> bool:
    """Accept iff the cycle's RTD does not exceed ``rtd_max``."""
    return compute_rtd(c) <= rtd_max


class RtdGate:
    """
    Stateful RTD gate.

    Counts rejected cycles and tracks the largest true-time gap between two
    accepted cycles (the empirical T_I).
    """

    def __init__(self, rtd_max: Optional[int] = None, start: int = 0):
        self.rtd_max = rtd_max
        self.accepted = 0
        self.rejected = 0
        self.max_gap = 0
        self._last_accept = start

    def __call__(self, c: SyncCycle, now: int) -> bool:
        if self.rtd_max is not None and not rtd_gate(c, self.rtd_max):
            self.rejected += 1
            logger.debug("Cycle %d rejected: RTD %d > %d", c.seq, compute_rtd(c), self.rtd_max)
            return False

        self.accepted += 1
        self.max_gap = max(self.max_gap, now - self._last_accept)
        self._last_accept = now
        return True

    def finish(self, now: int) -> int:
        """Close the run at ``now`` and return the maximum gap."""
        self.max_gap = max(self.max_gap, now - self._last_accept)
        return self.max_gap


@dataclass(frozen=True)
class ReplayPolicy:
    """Anti-replay window size. ``None`` disables replay protection."""

    window: Optional[int] = None

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise ValueError("replay window must be >= 1")

    @property
    def enabled(self) -> bool:
        return self.window is not None


class ReplayWindow:
    """
    Sliding anti-replay window over per-sender sequence numbers.

    Keeps the highest accepted number and a bitmap of the ``window - 1``
    numbers below it. Window 1 accepts only numbers above every accepted one.
    """

    def __init__(self, policy: ReplayPolicy):
        self.policy = policy
        self.highest = 0
        self._bitmap = 0
        self.rejected = 0

    def check(self, seq: int) -> bool:
        window = self.policy.window
        if window is None:
            return True

        if seq > self.highest:
            shift = seq - self.highest
            self._bitmap = ((self._bitmap << shift) | 1) & ((1 << window) - 1)
            self.highest = seq
            return True

        behind = self.highest - seq
        if behind < window and not self._bitmap >> behind & 1:
            self._bitmap |= 1 << behind
            return True

        self.rejected += 1
        return False


def replay_check(seq: int, policy: ReplayPolicy, state: ReplayWindow) -> bool:
    """
    Accept or reject ``seq`` under ``policy``.

    Raises:
        ValueError: If ``state`` tracks a window of another policy.
    """
    if state.policy != policy:
        raise ValueError(
            "Replay state tracks window {}, not {}".format(state.policy.window, policy.window)
        )
    return state.check(seq)


@dataclass(frozen=True)
class PaddingPolicy:
    """``none``, ``fixed`` (pad to ``target``) or ``max`` (pad to the largest PTP length)."""

    kind: str = "none"
    target: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("none", "fixed", "max"):
            raise ValueError("Unknown padding policy {!r}".format(self.kind))
        if self.kind == "fixed" and self.target is None:
            raise ValueError("fixed padding needs a target length")

    def target_for(self, scheme: EncryptionScheme) -> Optional[int]:
        largest = max(scheme.wrap(kind.plain_length) for kind in MessageKind)
        if self.kind == "none":
            return None
        if self.kind == "max":
            return largest
        if self.target < largest:
            raise PaddingError(
                "Padding target {} B is below the largest wrapped PTP length {} B".format(
                    self.target, largest
                )
            )
        return self.target


def apply_padding(plain_length: int, policy: PaddingPolicy, scheme: EncryptionScheme) -> int:
    """
    Wire length of a packet after encryption and padding.

    ``max`` never shrinks packets longer than the target; ``fixed`` raises
    for them.
    """
    wrapped = scheme.wrap(plain_length)
    target = policy.target_for(scheme)
    if target is None:
        return wrapped

    if wrapped > target:
        if policy.kind == "max":
            return wrapped
        raise PaddingError(
            "{} B wraps to {} B, above the padding target {} B".format(
                plain_length, wrapped, target
            )
        )

    if target - wrapped > scheme.max_padding:
        raise PaddingError(
            "Padding {} B to {} B needs more than {} padding bytes".format(
                wrapped, target, scheme.max_padding
            )
        )
    return target


@dataclass(frozen=True)
class TimingRandomization:
    """Inclusive draw ranges (ns). ``None`` keeps the configured value."""

    t0_range: Optional[Tuple[int, int]] = None
    t1_range: Optional[Tuple[int, int]] = None
    sync_offset_range: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        for name in ("t0_range", "t1_range", "sync_offset_range"):
            value = getattr(self, name)
            if value is not None and not 0 <= value[0] <= value[1]:
                raise ValueError("{} must satisfy 0 <= lo <= hi".format(name))
        for name in ("t0_range", "t1_range"):
            value = getattr(self, name)
            if value is not None and value[0] == 0:
                raise ValueError("{} must be positive".format(name))

    @property
    def enabled(self) -> bool:
        return any(
            r is not None
            for r in (self.t0_range, self.t1_range, self.sync_offset_range)
        )

    def validate(self, config: EngineConfig) -> "TimingRandomization":
        if self.sync_offset_range is not None and self.sync_offset_range[1] >= config.sync_interval:
            raise ValueError("sync offset range must stay below the sync interval")
        return self


def _draw(rng: np.random.Generator, value_range, default: int) -> int:
    if value_range is None:
        return default
    lo, hi = value_range
    if lo == hi:
        return lo
    return int(rng.integers(lo, hi + 1))


def randomize_timing(
    config: EngineConfig, randomization: TimingRandomization, rng: np.random.Generator
) -> CycleTiming:
    """Draw the lags of one cycle."""
    return CycleTiming(
        _draw(rng, randomization.t0_range, config.followup_lag),
        _draw(rng, randomization.t1_range, config.delayreq_lag),
        _draw(rng, randomization.sync_offset_range, 0),
    )


def timing_source(
    config: EngineConfig, randomization: TimingRandomization, rng: np.random.Generator
) -> TimingSource:
    randomization.validate(config)
    return lambda: randomize_timing(config, randomization, rng)


class RoundTripCheck(NamedTuple):
    sync_width: int
    resp_width: int
    suspicious: bool


class RoundTripComparator:
    """
    Compare the bound widths of the Sync→DelayReq and DelayReq→DelayResp
    round trips of a cycle.

    A selective delay on one message widens only one of them.

    Args:
        constraints (OwdConstraints): Minimum one-way delays.
        factor (float): Ratio above which a cycle is suspicious.
        min_width (int): Floor of the smaller width, in ns.
    """

    def __init__(self, constraints: OwdConstraints, factor: float = 3, min_width: int = 1000):
        self.constraints = constraints
        self.factor = factor
        self.min_width = min_width
        self.suspicious = 0

    def __call__(self, c: SyncCycle) -> Optional[RoundTripCheck]:
        if c.t_M5 is None or c.t_S6 is None or not c.complete:
            return None

        total = self.constraints.total
        sync_width = compute_rtd(c) - total
        resp_width = (c.t_S6 - c.t_S3) - (c.t_M5 - c.t_M4) - total

        larger = max(sync_width, resp_width)
        smaller = max(min(sync_width, resp_width), self.min_width)
        suspicious = larger > self.factor * smaller

        if suspicious:
            self.suspicious += 1
            logger.debug(
                "Cycle %d: round-trip widths %d ns vs %d ns suggest a selective delay",
                c.seq,
                sync_width,
                resp_width,
            )

        return RoundTripCheck(sync_width, resp_width, suspicious)
