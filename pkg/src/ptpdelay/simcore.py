"""
Discrete-event engine and clock models.

All times are integer nanoseconds of true simulation time. Local clocks map
true time to their own reading; drift is evaluated as an exact rational and
truncated toward zero.
"""

import heapq
import itertools
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, List, NewType, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "SimTime",
    "Duration",
    "NS_PER_US",
    "NS_PER_MS",
    "NS_PER_S",
    "ClockOverflowError",
    "CorrectionOrderError",
    "RandomWalk",
    "ClockModel",
    "Event",
    "EventLoop",
    "local_time",
    "apply_correction",
    "run_until",
]

SimTime = NewType("SimTime", int)
Duration = NewType("Duration", int)

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

INT64_MAX = 2 ** 63 - 1
INT64_MIN = -(2 ** 63)

PPM = Fraction(1, 1_000_000)


class ClockOverflowError(OverflowError):
    """Raised when a time value leaves the signed 64-bit nanosecond range."""


class CorrectionOrderError(ValueError):
    """Raised when a clock correction is applied before the latest prior one."""


def check_int64(value: int, what: str = "time") -> int:
    if not INT64_MIN <= value <= INT64_MAX:
        raise ClockOverflowError("{} {} exceeds the 64-bit range".format(what, value))
    return value


def trunc_div(num: int, den: int) -> int:
    """Integer division rounding toward zero."""
    q = abs(num) // abs(den)
    return q if (num >= 0) == (den > 0) else -q


def to_fraction(value: Union[int, float, str, Fraction]) -> Fraction:
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1_000_000)
    return Fraction(value)


class RandomWalk:
    """
    Seeded Gaussian random walk sampled on a fixed grid.

    The value at true time t is the sum of all increments on grid points
    ``<= t``. Increments are generated lazily, always in grid order, so the
    path does not depend on the order of queries.

    Args:
        sigma_ns (float): Standard deviation of one increment.
        step_ns (int): Grid spacing.
        seed (int): Seed of the increment generator.
    """

    _CHUNK = 4096

    def __init__(self, sigma_ns: float, step_ns: int, seed: int):
        if step_ns <= 0:
            raise ValueError("step_ns must be positive")
        if sigma_ns < 0:
            raise ValueError("sigma_ns must be non-negative")

        self.sigma_ns = sigma_ns
        self.step_ns = step_ns
        self.seed = seed

        self._rng = np.random.default_rng(seed)
        self._path = np.zeros(0, dtype=np.int64)

    def _extend(self, n: int):
        while len(self._path) < n:
            increments = np.rint(
                self._rng.normal(0.0, self.sigma_ns, self._CHUNK)
            ).astype(np.int64)
            offset = self._path[-1] if len(self._path) else 0
            self._path = np.concatenate((self._path, offset + np.cumsum(increments)))

    def __call__(self, t: int) -> int:
        if self.sigma_ns == 0 or t < self.step_ns:
            return 0
        index = t // self.step_ns
        self._extend(index)
        return int(self._path[index - 1])

    def __repr__(self):
        return "RandomWalk(sigma_ns={}, step_ns={}, seed={})".format(
            self.sigma_ns, self.step_ns, self.seed
        )


class ClockModel:
    """
    A drifting local clock.

    ``local_time(t) = t + offset_at_epoch + drift·t + wander(t) + corrections(t)``

    Args:
        offset_at_epoch (int): Local minus true time at t=0 (ns).
        drift_ppm (int, str, Fraction): Signed drift in parts per million.
        wander (RandomWalk, optional): Random-walk term, off by default.
        name (str): Name used in log messages.

    Example:
        .. code-block:: python

            clock = ClockModel(offset_at_epoch=10)
            clock.local_time(0)  # 10
            clock.apply_correction(5, -10)
            clock.local_time(6)  # 6
    """

    def __init__(
        self,
        offset_at_epoch: int = 0,
        drift_ppm: Union[int, str, Fraction] = 0,
        wander: Optional[RandomWalk] = None,
        name: str = "clock",
    ):
        self.offset_at_epoch = check_int64(int(offset_at_epoch), "offset_at_epoch")
        self.drift_ppm = to_fraction(drift_ppm)
        if abs(self.drift_ppm) >= 1_000_000:
            raise ValueError("|drift_ppm| must be below 10^6")
        self.wander = wander
        self.name = name

        # Corrections as parallel lists, ordered by effective time
        self._at = []  # type: List[int]
        self._step = []  # type: List[int]
        self._slew = []  # type: List[int]
        self._cumulative = [0]  # type: List[int]
        self._max_slew = 0

    @property
    def applied_corrections(self):
        """List of (effective true time, step, slew duration) triples."""
        return list(zip(self._at, self._step, self._slew))

    @property
    def last_correction_at(self) -> Optional[int]:
        return self._at[-1] if self._at else None

    def drift_term(self, t: int) -> int:
        value = self.drift_ppm * PPM * t
        return trunc_div(value.numerator, value.denominator)

    def free_local_time(self, t: int) -> int:
        """Local time without any applied correction."""
        if t < 0:
            raise ValueError("true time must be non-negative, got {}".format(t))
        check_int64(t)
        value = t + self.offset_at_epoch + self.drift_term(t)
        if self.wander is not None:
            value += self.wander(t)
        return check_int64(value, "local time")

    def correction_at(self, t: int) -> int:
        """Sum of all correction contributions effective at true time t."""
        k = bisect_right(self._at, t)
        total = self._cumulative[k]

        if self._max_slew:
            # Only corrections started within the longest slew can still be partial
            i = k - 1
            while i >= 0 and self._at[i] > t - self._max_slew:
                slew = self._slew[i]
                elapsed = t - self._at[i]
                if slew and elapsed < slew:
                    step = self._step[i]
                    total += trunc_div(step * elapsed, slew) - step
                i -= 1

        return total

    def local_time(self, t: int) -> int:
        """Return the local reading of this clock at true time ``t``."""
        return check_int64(self.free_local_time(t) + self.correction_at(t), "local time")

    def apply_correction(self, at: int, step: int, slew: int = 0) -> "ClockModel":
        """
        Apply a correction of ``step`` ns effective at true time ``at``.

        With ``slew > 0`` the step is spread linearly over ``slew`` ns.
        """
        if self._at and at < self._at[-1]:
            raise CorrectionOrderError(
                "{}: correction at {} precedes latest correction at {}".format(
                    self.name, at, self._at[-1]
                )
            )
        if slew < 0:
            raise ValueError("slew duration must be non-negative")

        check_int64(at)
        self._at.append(at)
        self._step.append(int(step))
        self._slew.append(int(slew))
        self._cumulative.append(check_int64(self._cumulative[-1] + int(step), "correction"))
        self._max_slew = max(self._max_slew, int(slew))

        logger.debug("%s: correction %d ns at %d (slew %d)", self.name, step, at, slew)

        return self

    def __repr__(self):
        return "ClockModel(name={!r}, offset_at_epoch={}, drift_ppm={}, corrections={})".format(
            self.name, self.offset_at_epoch, self.drift_ppm, len(self._at)
        )


def local_time(clock: ClockModel, t: int) -> int:
    return clock.local_time(t)


def apply_correction(clock: ClockModel, at: int, step: int, slew: int = 0) -> ClockModel:
    return clock.apply_correction(at, step, slew)


@dataclass(order=True)
class Event:
    fire_at: int
    seq: int
    action: Callable[[], Any] = field(compare=False)


class EventLoop:
    """
    Single-threaded discrete-event loop.

    Events with equal ``fire_at`` run in insertion order.
    """

    def __init__(self):
        self.now = 0
        self._queue = []  # type: List[Event]
        self._seq = itertools.count()

    def __len__(self):
        return len(self._queue)

    def schedule(self, fire_at: int, action: Callable[[], Any]) -> Event:
        if fire_at < self.now:
            raise ValueError(
                "Cannot schedule at {} before current time {}".format(fire_at, self.now)
            )
        check_int64(fire_at)
        event = Event(fire_at, next(self._seq), action)
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: int, action: Callable[[], Any]) -> Event:
        return self.schedule(self.now + delay, action)

    def run_until(self, horizon: int) -> int:
        """Execute all events with ``fire_at <= horizon``. Return their number."""
        executed = 0
        while self._queue and self._queue[0].fire_at <= horizon:
            event = heapq.heappop(self._queue)
            self.now = event.fire_at
            event.action()
            executed += 1
        self.now = max(self.now, horizon)
        return executed


def run_until(loop: EventLoop, horizon: int) -> int:
    return loop.run_until(horizon)
