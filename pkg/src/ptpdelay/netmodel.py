"""
Simulated bidirectional link with decomposed delays, encryption envelopes and
the on-path observation tap.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from ptpdelay.simcore import NS_PER_MS, NS_PER_S

logger = logging.getLogger(__name__)

__all__ = [
    "Direction",
    "Jitter",
    "LinkProfile",
    "Envelope",
    "Observation",
    "EncryptionScheme",
    "UnknownLengthError",
    "SCHEMES",
    "IDENTITY",
    "IPSEC_TUNNEL",
    "encrypt_wrap",
    "Delivery",
    "Link",
    "Tap",
    "tap",
    "transmit",
    "noise_source",
    "cover_traffic",
    "OBSERVATION_COLUMNS",
]

OBSERVATION_COLUMNS = ["seen_at", "length", "direction"]


class UnknownLengthError(KeyError):
    """Raised when an encryption scheme has no wire length for a plain length."""


class Direction(enum.Enum):
    MASTER_TO_SLAVE = "MS"
    SLAVE_TO_MASTER = "SM"

    @property
    def code(self) -> int:
        return 0 if self is Direction.MASTER_TO_SLAVE else 1

    @property
    def reverse(self) -> "Direction":
        if self is Direction.MASTER_TO_SLAVE:
            return Direction.SLAVE_TO_MASTER
        return Direction.MASTER_TO_SLAVE

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, Direction):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(
                "Unknown direction {!r}, expected MS or SM".format(value)
            ) from None

    def __str__(self):
        return self.value


MS = Direction.MASTER_TO_SLAVE
SM = Direction.SLAVE_TO_MASTER


@dataclass(frozen=True)
class Jitter:
    """
    Jitter distribution descriptor.

    ``kind`` is one of ``none``, ``uniform`` (``a``=lo, ``b``=hi) or
    ``normal`` (``a``=μ, ``b``=σ, truncated at zero).
    """

    kind: str = "none"
    a: int = 0
    b: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "normal"):
            raise ValueError("Unknown jitter kind {!r}".format(self.kind))
        if self.kind == "uniform" and not 0 <= self.a <= self.b:
            raise ValueError("uniform jitter needs 0 <= lo <= hi")
        if self.kind == "normal" and self.b < 0:
            raise ValueError("normal jitter needs sigma >= 0")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def uniform(cls, lo: int, hi: int):
        return cls("uniform", int(lo), int(hi))

    @classmethod
    def truncated_normal(cls, mu: int, sigma: int):
        return cls("normal", int(mu), int(sigma))

    @property
    def spread(self) -> float:
        """Width of the jitter support (infinite for the normal variant)."""
        if self.kind == "none":
            return 0
        if self.kind == "uniform":
            return self.b - self.a
        return math.inf if self.b else 0

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "none":
            return 0
        if self.kind == "uniform":
            return int(rng.integers(self.a, self.b + 1))

        while True:
            value = rng.normal(self.a, self.b)
            if value >= 0:
                return int(round(value))

    def __str__(self):
        if self.kind == "none":
            return "none"
        return "{}({},{})".format(self.kind, self.a, self.b)


@dataclass
class LinkProfile:
    """
    Delay decomposition of the simulated link.

    Every delivery takes at least ``d_common + delta(direction)``.

    Attributes:
        d_common: Symmetric delay part (ns).
        delta_ms: Additional master→slave delay (ns).
        delta_sm: Additional slave→master delay (ns).
        jitter: Jitter distribution added per packet.
        rate: Bytes per second for the length-dependent part (0 disables it).
        tap_offset_ms, tap_offset_sm: Time after sending at which the
            observer sees a packet (defaults: delta + d_common // 2).
        fifo: Preserve per-direction arrival order.
    """

    d_common: int = 0
    delta_ms: int = 0
    delta_sm: int = 0
    jitter: Jitter = field(default_factory=Jitter)
    rate: int = 0
    tap_offset_ms: Optional[int] = None
    tap_offset_sm: Optional[int] = None
    fifo: bool = True

    def __post_init__(self):
        for name in ("d_common", "delta_ms", "delta_sm", "rate"):
            if getattr(self, name) < 0:
                raise ValueError("{} must be non-negative".format(name))

        for direction in Direction:
            offset = self.tap_offset(direction)
            if not 0 <= offset <= self.min_delay(direction):
                raise ValueError(
                    "tap offset {} ({}) must lie within [0, {}]".format(
                        direction, offset, self.min_delay(direction)
                    )
                )

    def delta(self, direction: Direction) -> int:
        return self.delta_ms if direction is MS else self.delta_sm

    def min_delay(self, direction: Direction) -> int:
        return self.d_common + self.delta(direction)

    def tap_offset(self, direction: Direction) -> int:
        offset = self.tap_offset_ms if direction is MS else self.tap_offset_sm
        if offset is None:
            return self.delta(direction) + self.d_common // 2
        return offset

    def tx_delay(self, wire_length: int) -> int:
        if not self.rate:
            return 0
        return wire_length * NS_PER_S // self.rate


@dataclass
class Envelope:
    """An encrypted packet on the wire. Only lengths and timing are visible."""

    plain_length: int
    wire_length: int
    send_time_true: int
    direction: Direction
    seq: int
    payload_kind: Any = field(default=None, repr=False, compare=False)
    payload: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.wire_length < self.plain_length:
            raise ValueError("wire_length must not be smaller than plain_length")


class Observation(NamedTuple):
    seen_at: int
    wire_length: int
    direction: Direction


@dataclass(frozen=True)
class EncryptionScheme:
    """
    Plain-length to wire-length mapping of an encryption scheme.

    The table is consulted first. Otherwise, with ``block > 0``, the plain
    length is rounded up to a multiple of ``block`` and ``overhead`` is added.
    """

    name: str
    table: Mapping[int, int] = field(default_factory=dict)
    block: int = 0
    overhead: int = 0
    max_padding: int = 255

    def wrap(self, plain_length: int) -> int:
        if plain_length <= 0:
            raise ValueError("plain_length must be positive, got {}".format(plain_length))

        try:
            return self.table[plain_length]
        except KeyError:
            pass

        if self.block > 0:
            return -(-plain_length // self.block) * self.block + self.overhead

        raise UnknownLengthError(
            "Scheme {} has no wire length for {} B".format(self.name, plain_length)
        )


IDENTITY = EncryptionScheme("identity", block=1)
IPSEC_TUNNEL = EncryptionScheme("ipsec-tunnel", block=16, overhead=42)
IPSEC_TABLE = EncryptionScheme("ipsec-table", table={86: 138, 96: 138, 106: 154})

SCHEMES: Dict[str, EncryptionScheme] = {
    s.name: s for s in (IDENTITY, IPSEC_TUNNEL, IPSEC_TABLE)
}


def encrypt_wrap(plain_length: int, scheme: EncryptionScheme) -> int:
    return scheme.wrap(plain_length)


class Delivery(NamedTuple):
    """Arrival of one envelope with its delay components."""

    arrival: int
    d: int
    delta: int
    tx: int
    jitter: int
    hold: int
    attack: int

    @property
    def owd(self) -> int:
        return self.d + self.delta + self.tx + self.jitter + self.hold + self.attack


class Link:
    """
    Stateful link applying a :py:class:`LinkProfile`.

    Args:
        profile (LinkProfile): Delay decomposition.
        rng (numpy.random.Generator): Source of jitter samples.
    """

    def __init__(self, profile: LinkProfile, rng: np.random.Generator):
        self.profile = profile
        self.rng = rng
        self._last_arrival = {d: -1 for d in Direction}
        self.n_transmitted = 0
        self.n_dropped = 0

    def transmit(
        self, env: Envelope, attacker_delay=0, hold_successors: bool = True
    ) -> Optional[Delivery]:
        """
        Deliver ``env``, adding ``attacker_delay`` on top of the natural delay.

        ``math.inf`` drops the envelope (returns None). With
        ``hold_successors=False``, later envelopes may overtake a maliciously
        delayed one.
        """
        if attacker_delay < 0:
            raise ValueError("attacker_delay must be non-negative")

        profile = self.profile
        direction = env.direction

        jitter = profile.jitter.sample(self.rng)
        self.n_transmitted += 1

        if math.isinf(attacker_delay):
            self.n_dropped += 1
            logger.debug("Dropped %s seq=%d", direction, env.seq)
            return None

        attacker_delay = int(attacker_delay)
        d = profile.d_common
        delta = profile.delta(direction)
        tx = profile.tx_delay(env.wire_length)
        natural = env.send_time_true + d + delta + tx + jitter

        hold = 0
        if profile.fifo:
            hold = max(0, self._last_arrival[direction] - natural)
            if hold:
                logger.debug("FIFO hold %d ns for %s seq=%d", hold, direction, env.seq)

        arrival = natural + hold + attacker_delay

        if hold_successors:
            self._last_arrival[direction] = arrival
        else:
            self._last_arrival[direction] = max(
                self._last_arrival[direction], natural + hold
            )

        return Delivery(arrival, d, delta, tx, jitter, hold, attacker_delay)


def transmit(
    env: Envelope, link: Link, attacker_delay=0, hold_successors: bool = True
) -> Optional[Delivery]:
    return link.transmit(env, attacker_delay, hold_successors)


def observations_to_frame(observations: Iterable[Observation]) -> pd.DataFrame:
    rows = [(o.seen_at, o.wire_length, o.direction.value) for o in observations]
    frame = pd.DataFrame(rows, columns=OBSERVATION_COLUMNS)
    return frame.astype({"seen_at": "int64", "length": "int64"})


def frame_to_observations(frame: pd.DataFrame) -> List[Observation]:
    return [
        Observation(int(seen_at), int(length), Direction(direction))
        for seen_at, length, direction in zip(
            frame["seen_at"], frame["length"], frame["direction"]
        )
    ]


class Tap:
    """
    Observer at the man-in-the-middle position.

    Records one :py:class:`Observation` per envelope plus any merged noise.
    """

    def __init__(self, profile: LinkProfile):
        self.profile = profile
        self._seen = []  # type: List[Observation]
        self._noise = []  # type: List[pd.DataFrame]

    def record(self, env: Envelope) -> Observation:
        obs = Observation(
            env.send_time_true + self.profile.tap_offset(env.direction),
            env.wire_length,
            env.direction,
        )
        self._seen.append(obs)
        return obs

    def add_noise(self, frame: pd.DataFrame):
        self._noise.append(frame[OBSERVATION_COLUMNS])

    def __len__(self):
        return len(self._seen) + sum(len(f) for f in self._noise)

    def frame(self) -> pd.DataFrame:
        """All observations as a frame sorted by ``seen_at``."""
        frames = [observations_to_frame(self._seen)] + self._noise
        frame = pd.concat(frames, ignore_index=True)
        frame = frame.sort_values("seen_at", kind="mergesort", ignore_index=True)
        return frame.astype({"seen_at": "int64", "length": "int64"})

    def observations(self) -> List[Observation]:
        return frame_to_observations(self.frame())


def tap(envelopes: Iterable[Envelope], profile: LinkProfile, noise=None) -> List[Observation]:
    """Observations of ``envelopes`` (and optional noise frame), sorted by time."""
    t = Tap(profile)
    for env in envelopes:
        t.record(env)
    if noise is not None:
        t.add_noise(noise)
    return t.observations()


def noise_source(
    p: float,
    length_range: Tuple[int, int],
    duration: int,
    rng: np.random.Generator,
    start: int = 0,
) -> pd.DataFrame:
    """
    Generate observation-only noise.

    Every 1 ms bin independently holds one packet with probability ``p``, at a
    uniform position inside the bin, with uniform length and direction.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1], got {}".format(p))
    lo, hi = length_range
    if not 0 < lo <= hi:
        raise ValueError("invalid length range {}".format(length_range))

    n_bins = duration // NS_PER_MS
    occupied = np.flatnonzero(rng.random(n_bins) < p)
    n = len(occupied)

    seen_at = start + occupied * NS_PER_MS + rng.integers(0, NS_PER_MS, n)
    length = rng.integers(lo, hi + 1, n)
    direction = np.where(rng.random(n) < 0.5, MS.value, SM.value)

    logger.debug("Generated %d noise observations over %d bins", n, n_bins)

    return pd.DataFrame(
        {"seen_at": seen_at.astype("int64"), "length": length.astype("int64"), "direction": direction}
    )


def cover_traffic(
    rate: float,
    length_range: Tuple[int, int],
    duration: int,
    rng: np.random.Generator,
    start: int = 0,
) -> pd.DataFrame:
    """
    Poisson send times and plain lengths of cover packets for one direction.

    Args:
        rate (float): Mean packets per second.
    """
    if rate < 0:
        raise ValueError("rate must be non-negative")
    lo, hi = length_range
    if not 0 < lo <= hi:
        raise ValueError("invalid length range {}".format(length_range))

    n = rng.poisson(rate * duration / NS_PER_S)
    send_at = np.sort(start + rng.integers(0, max(duration, 1), n))
    length = rng.integers(lo, hi + 1, n)

    return pd.DataFrame({"send_at": send_at.astype("int64"), "length": length.astype("int64")})
