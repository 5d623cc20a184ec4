"""
Two-step PTP master and slave state machines, RTD/offset calculus and servo.

Sign convention: a positive offset means the slave is ahead of the master.
"""

import enum
import heapq
import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

from ptpdelay.netmodel import Direction
from ptpdelay.simcore import NS_PER_MS, NS_PER_S, ClockModel, trunc_div

logger = logging.getLogger(__name__)

__all__ = [
    "MessageKind",
    "Message",
    "SyncCycle",
    "IncompleteCycleError",
    "compute_rtd",
    "compute_offset",
    "EngineConfig",
    "CycleTiming",
    "Master",
    "Slave",
    "SlaveStep",
    "ServoState",
    "Correction",
    "servo_apply",
]


class IncompleteCycleError(ValueError):
    """Raised when a calculation needs all four timestamps of a cycle."""


class MessageKind(enum.Enum):
    SYNC = "Sync"
    FOLLOW_UP = "FollowUp"
    DELAY_REQ = "DelayReq"
    DELAY_RESP = "DelayResp"
    ANNOUNCE = "Announce"

    @property
    def plain_length(self) -> int:
        return _PLAIN_LENGTHS[self]

    @property
    def direction(self) -> Direction:
        if self is MessageKind.DELAY_REQ:
            return Direction.SLAVE_TO_MASTER
        return Direction.MASTER_TO_SLAVE

    @classmethod
    def parse(cls, value) -> "MessageKind":
        if isinstance(value, MessageKind):
            return value
        text = str(value).strip()
        for kind in cls:
            if text.lower() in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ValueError("Unknown message kind {!r}".format(value))

    def __str__(self):
        return self.value


_PLAIN_LENGTHS = {
    MessageKind.SYNC: 86,
    MessageKind.FOLLOW_UP: 86,
    MessageKind.DELAY_REQ: 96,
    MessageKind.DELAY_RESP: 86,
    MessageKind.ANNOUNCE: 106,
}

CYCLE_KINDS = (
    MessageKind.SYNC,
    MessageKind.FOLLOW_UP,
    MessageKind.DELAY_REQ,
    MessageKind.DELAY_RESP,
)


@dataclass
class Message:
    """
    A PTP message.

    ``timestamp`` carries t_M1 in a FollowUp and t_M4 in a DelayResp.
    ``t_M5`` is the master send time of a DelayResp.
    """

    kind: MessageKind
    seq: int
    timestamp: Optional[int] = None
    t_M5: Optional[int] = None

    @property
    def plain_length(self) -> int:
        return self.kind.plain_length

    @property
    def direction(self) -> Direction:
        return self.kind.direction


@dataclass
class SyncCycle:
    """The four timestamps of one synchronization round (plus t_M5/t_S6)."""

    seq: int
    t_M1: Optional[int] = None
    t_S2: Optional[int] = None
    t_S3: Optional[int] = None
    t_M4: Optional[int] = None
    t_M5: Optional[int] = None
    t_S6: Optional[int] = None

    @property
    def complete(self) -> bool:
        return None not in (self.t_M1, self.t_S2, self.t_S3, self.t_M4)

    def require_complete(self):
        if not self.complete:
            raise IncompleteCycleError("Cycle {} is incomplete: {}".format(self.seq, self))


def compute_rtd(c: SyncCycle) -> int:
    """``t_S2 − t_M1 + t_M4 − t_S3``"""
    c.require_complete()
    return c.t_S2 - c.t_M1 + c.t_M4 - c.t_S3


def compute_offset(c: SyncCycle) -> int:
    """``t_S2 − t_M1 − RTD/2``, halving toward zero."""
    rtd = compute_rtd(c)
    half = trunc_div(rtd, 2)
    if rtd - 2 * half:
        logger.debug("Cycle %d: RTD %d ns is odd, halving drops 1 ns", c.seq, rtd)
    return c.t_S2 - c.t_M1 - half


@dataclass
class EngineConfig:
    sync_interval: int = 250 * NS_PER_MS
    announce_interval: int = 2 * NS_PER_S
    followup_lag: int = 3 * NS_PER_MS
    delayreq_lag: int = 5 * NS_PER_MS
    delayresp_lag: int = 0
    announce_offset: int = 125 * NS_PER_MS
    first_sync: Optional[int] = None

    def __post_init__(self):
        for name in ("sync_interval", "announce_interval", "followup_lag", "delayreq_lag"):
            if getattr(self, name) <= 0:
                raise ValueError("{} must be positive".format(name))
        for name in ("delayresp_lag", "announce_offset"):
            if getattr(self, name) < 0:
                raise ValueError("{} must be non-negative".format(name))
        if self.first_sync is None:
            self.first_sync = self.sync_interval


class CycleTiming(NamedTuple):
    """Per-cycle lags: FollowUp lag t0, DelayReq lag t1 and Sync offset."""

    t0: int
    t1: int
    sync_offset: int = 0


TimingSource = Callable[[], CycleTiming]


def fixed_timing(config: EngineConfig) -> TimingSource:
    timing = CycleTiming(config.followup_lag, config.delayreq_lag, 0)
    return lambda: timing


class Master:
    """
    PTP master.

    The owner calls :py:meth:`step` at :py:meth:`next_due` and sends the
    returned messages immediately.

    Args:
        clock (ClockModel): Master clock.
        config (EngineConfig): Message intervals and lags.
        timing (callable, optional): Per-cycle timing draws (see guard).
    """

    def __init__(
        self,
        clock: ClockModel,
        config: EngineConfig,
        timing: Optional[TimingSource] = None,
    ):
        self.clock = clock
        self.config = config
        self.timing = timing or fixed_timing(config)

        self._due = []  # type: List[Tuple[int, int, MessageKind, int, Optional[int]]]
        self._order = itertools.count()
        self._sync_seq = 0
        self._announce_seq = 0
        self._sent_sync = {}  # type: Dict[int, int]
        self._t0 = {}  # type: Dict[int, int]

        self._schedule_sync()
        self._push(config.announce_offset, MessageKind.ANNOUNCE, 0)

    def _push(self, at: int, kind: MessageKind, seq: int, timestamp=None):
        heapq.heappush(self._due, (at, next(self._order), kind, seq, timestamp))

    def _schedule_sync(self):
        draw = self.timing()
        seq = self._sync_seq
        nominal = self.config.first_sync + seq * self.config.sync_interval
        self._t0[seq] = draw.t0
        self._push(nominal + draw.sync_offset, MessageKind.SYNC, seq)

    def next_due(self) -> Optional[int]:
        return self._due[0][0] if self._due else None

    def step(self, now: int) -> List[Message]:
        """Emit all messages due at or before ``now``."""
        emitted = []
        while self._due and self._due[0][0] <= now:
            _, _, kind, seq, timestamp = heapq.heappop(self._due)
            local = self.clock.local_time(now)

            if kind is MessageKind.SYNC:
                self._sent_sync[seq] = local
                self._push(now + self._t0.pop(seq), MessageKind.FOLLOW_UP, seq, local)
                self._sync_seq += 1
                self._schedule_sync()
                emitted.append(Message(kind, seq))
            elif kind is MessageKind.FOLLOW_UP:
                emitted.append(Message(kind, seq, timestamp=timestamp))
            elif kind is MessageKind.DELAY_RESP:
                emitted.append(Message(kind, seq, timestamp=timestamp, t_M5=local))
            elif kind is MessageKind.ANNOUNCE:
                self._announce_seq += 1
                self._push(
                    now + self.config.announce_interval,
                    MessageKind.ANNOUNCE,
                    self._announce_seq,
                )
                emitted.append(Message(kind, seq))

        return emitted

    def sent_sync_time(self, seq: int) -> Optional[int]:
        return self._sent_sync.get(seq)

    def receive(self, msg: Message, now: int) -> int:
        """Record t_M4 of a DelayReq and queue the DelayResp. Return its due time."""
        if msg.kind is not MessageKind.DELAY_REQ:
            raise ValueError("Master only receives DelayReq, got {}".format(msg.kind))
        t_M4 = self.clock.local_time(now)
        due = now + self.config.delayresp_lag
        self._push(due, MessageKind.DELAY_RESP, msg.seq, t_M4)
        return due


class SlaveStep(NamedTuple):
    delay_req_at: Optional[int] = None
    cycle: Optional[SyncCycle] = None


class Slave:
    """
    PTP slave.

    Stale or out-of-order messages are discarded and counted in
    :py:attr:`discarded`. Cycles abandoned before completion are counted in
    :py:attr:`incomplete`.
    """

    def __init__(
        self,
        clock: ClockModel,
        config: EngineConfig,
        timing: Optional[TimingSource] = None,
    ):
        self.clock = clock
        self.config = config
        self.timing = timing or fixed_timing(config)

        self._sync = None  # type: Optional[Tuple[int, int]]
        self.current = None  # type: Optional[SyncCycle]
        self._highest_seq = -1
        self.discarded = {"followup": 0, "delayresp": 0, "sync": 0}
        self.incomplete = 0
        self.completed = 0

    def _abandon_current(self):
        if self.current is not None:
            self.incomplete += 1
            logger.debug("Cycle %d abandoned without DelayResp", self.current.seq)
            self.current = None

    def step(self, msg: Message, now: int) -> SlaveStep:
        kind = msg.kind

        if kind is MessageKind.SYNC:
            if msg.seq <= self._highest_seq:
                self.discarded["sync"] += 1
                logger.debug("Discarded old Sync seq=%d", msg.seq)
                return SlaveStep()
            self._sync = (msg.seq, self.clock.local_time(now))
            return SlaveStep()

        if kind is MessageKind.FOLLOW_UP:
            if self._sync is None or self._sync[0] != msg.seq or msg.seq <= self._highest_seq:
                self.discarded["followup"] += 1
                logger.debug("Discarded FollowUp seq=%d", msg.seq)
                return SlaveStep()

            self._abandon_current()
            _, t_S2 = self._sync
            self._sync = None
            self._highest_seq = msg.seq
            self.current = SyncCycle(msg.seq, t_M1=msg.timestamp, t_S2=t_S2)
            return SlaveStep(delay_req_at=now + self.timing().t1)

        if kind is MessageKind.DELAY_RESP:
            cycle = self.current
            if cycle is None or cycle.t_S3 is None or cycle.seq != msg.seq:
                self.discarded["delayresp"] += 1
                logger.debug("Discarded stale DelayResp seq=%d", msg.seq)
                return SlaveStep()

            cycle.t_M4 = msg.timestamp
            cycle.t_M5 = msg.t_M5
            cycle.t_S6 = self.clock.local_time(now)
            self.current = None
            self.completed += 1
            return SlaveStep(cycle=cycle)

        # Announce carries no timing information for the slave
        return SlaveStep()

    def send_delay_req(self, now: int) -> Optional[Message]:
        """Record t_S3 and return the DelayReq, or None if no cycle is pending."""
        cycle = self.current
        if cycle is None or cycle.t_S3 is not None:
            return None
        cycle.t_S3 = self.clock.local_time(now)
        return Message(MessageKind.DELAY_REQ, cycle.seq)


@dataclass
class ServoState:
    alpha: Fraction = Fraction(1, 2)
    step_threshold: int = NS_PER_MS
    smoothed_offset: int = 0

    def __post_init__(self):
        self.alpha = Fraction(self.alpha)
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.step_threshold < 0:
            raise ValueError("step_threshold must be non-negative")


class Correction(NamedTuple):
    step: int
    slew: int

    @property
    def mode(self) -> str:
        return "slew" if self.slew else "step"


def servo_apply(
    servo: ServoState,
    measured_offset: int,
    clock: ClockModel,
    now: int,
    slew_duration: int,
) -> Correction:
    """
    Feed one measured offset to the servo and correct ``clock``.

    Above the step threshold the smoothed offset is stepped out at once,
    otherwise it is slewed out over ``slew_duration``.
    """
    smoothed = servo.alpha * measured_offset + (1 - servo.alpha) * servo.smoothed_offset
    servo.smoothed_offset = round(smoothed)

    if abs(servo.smoothed_offset) > servo.step_threshold:
        correction = Correction(-servo.smoothed_offset, 0)
    else:
        correction = Correction(-servo.smoothed_offset, slew_duration)

    if correction.step:
        clock.apply_correction(now, correction.step, correction.slew)

    return correction
