"""
Man-in-the-middle delay attacks.

The adversary sits at the tap. It sees only observations (time, wire length,
direction), labels them with the detector and adds non-negative delay.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import FrozenSet, List, NamedTuple, Optional, Union

import pandas as pd

from ptpdelay import detector
from ptpdelay.detector import (
    MotifNotFoundError,
    PtpProfileEstimate,
    SequenceClassifier,
    SequenceProfile,
)
from ptpdelay.netmodel import Direction, Observation, Tap
from ptpdelay.ptp import MessageKind
from ptpdelay.simcore import PPM, to_fraction

logger = logging.getLogger(__name__)

__all__ = [
    "AttackWindow",
    "AttackPlan",
    "NoAttack",
    "SelectiveDelay",
    "IncrementalDelay",
    "AsymmetricLinkDelay",
    "ClassifierHandle",
    "Adversary",
    "AttackLogRow",
    "decide_delay",
    "incremental_schedule",
]

DelayValue = Union[int, float]

#: Attack-log label of plans that do not classify
UNCLASSIFIED = "-"


@dataclass(frozen=True)
class AttackWindow:
    """Half-open true-time interval ``[start, end)``; ``end=None`` is unbounded."""

    start: int = 0
    end: Optional[int] = None

    def __post_init__(self):
        if self.start < 0:
            raise ValueError("window start must be non-negative")
        if self.end is not None and self.end < self.start:
            raise ValueError("window end precedes its start")

    def __contains__(self, t: int) -> bool:
        return self.start <= t and (self.end is None or t < self.end)


def _check_delay(delay: DelayValue):
    if not (delay >= 0):
        raise ValueError("attacker delay must be non-negative, got {}".format(delay))


@dataclass(frozen=True)
class AttackPlan:
    window: AttackWindow = field(default_factory=AttackWindow)
    hold_successors: bool = True

    #: Whether the plan needs message classification
    needs_classifier = False

    @property
    def name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class NoAttack(AttackPlan):
    pass


@dataclass(frozen=True)
class SelectiveDelay(AttackPlan):
    """Delay every message classified as one of ``targets``. ``math.inf`` drops it."""

    targets: FrozenSet[MessageKind] = frozenset({MessageKind.SYNC, MessageKind.FOLLOW_UP})
    delay: DelayValue = 0

    needs_classifier = True

    def __post_init__(self):
        _check_delay(self.delay)
        object.__setattr__(self, "targets", frozenset(self.targets))


@dataclass(frozen=True)
class IncrementalDelay(AttackPlan):
    """
    Delay targeted messages by a ramp growing with elapsed time.

    ``basis="delay"`` grows the injected delay by ``ramp_ppm``; with
    ``basis="offset"`` the induced offset grows at that rate instead, which
    doubles the delay.
    """

    targets: FrozenSet[MessageKind] = frozenset({MessageKind.SYNC, MessageKind.FOLLOW_UP})
    ramp_ppm: Fraction = Fraction(1)
    basis: str = "delay"

    needs_classifier = True

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(self.targets))
        object.__setattr__(self, "ramp_ppm", to_fraction(self.ramp_ppm))
        if self.ramp_ppm < 0:
            raise ValueError("ramp must be non-negative")
        if self.basis not in ("delay", "offset"):
            raise ValueError("basis must be 'delay' or 'offset'")


@dataclass(frozen=True)
class AsymmetricLinkDelay(AttackPlan):
    """Delay all traffic in one direction."""

    direction: Direction = Direction.MASTER_TO_SLAVE
    delay: DelayValue = 0

    def __post_init__(self):
        _check_delay(self.delay)


def incremental_schedule(
    ramp: Fraction, start: int, now: int, basis: str = "delay"
) -> int:
    """``ramp · 10⁻⁶ · (now − start)`` rounded to ns, doubled for the offset basis."""
    if now < start:
        raise ValueError("now ({}) precedes the attack start ({})".format(now, start))
    delay = to_fraction(ramp) * PPM * (now - start)
    if basis == "offset":
        delay *= 2
    return round(delay)


@dataclass
class ClassifierHandle:
    """
    Message classification available to the adversary.

    In oracle mode (tests only) the ground-truth kind supplied by the caller
    is used. Otherwise only the observation itself is consulted.
    """

    profile: Optional[PtpProfileEstimate] = None
    sequence: Optional[SequenceClassifier] = None
    oracle: bool = False
    min_confidence: float = 0.9

    @property
    def ready(self) -> bool:
        return self.oracle or self.profile is not None or self.sequence is not None

    def label(self, obs: Observation, truth: Optional[MessageKind] = None) -> Optional[MessageKind]:
        if self.oracle:
            return truth
        if self.profile is not None:
            return detector.classify(obs, self.profile, min_confidence=self.min_confidence).label
        if self.sequence is not None:
            return self.sequence.feed(obs)
        return None


def decide_delay(
    obs: Observation,
    plan: AttackPlan,
    classifier: ClassifierHandle,
    now: int,
    truth: Optional[MessageKind] = None,
) -> DelayValue:
    """Delay to inject for ``obs`` at true time ``now``."""
    if isinstance(plan, NoAttack) or now not in plan.window:
        return 0

    if isinstance(plan, AsymmetricLinkDelay):
        return plan.delay if obs.direction is plan.direction else 0

    if not classifier.ready:
        return 0

    return delay_for_label(plan, classifier.label(obs, truth), now)


def delay_for_label(plan: AttackPlan, label: Optional[MessageKind], now: int) -> DelayValue:
    if label not in plan.targets:
        return 0

    if isinstance(plan, SelectiveDelay):
        return plan.delay

    if isinstance(plan, IncrementalDelay):
        return incremental_schedule(plan.ramp_ppm, plan.window.start, now, plan.basis)

    raise TypeError("Unknown attack plan {!r}".format(plan))


class AttackLogRow(NamedTuple):
    true_time: int
    classified_kind: str
    injected_delay: DelayValue


class Adversary:
    """
    Stateful MITM at the tap.

    Plans that need classification arm lazily at the window start: the
    detector runs on everything the tap saw before the start. If neither the
    timing profile nor the sequence profile reaches ``min_confidence``, the
    adversary falls back to injecting nothing.

    Args:
        plan (AttackPlan): What to do.
        tap (Tap): The observation tap shared with the link.
        min_confidence (float): Arming threshold.
        oracle (bool): Use ground-truth labels (tests only).
        use_direction (bool): Let the detector use the direction field.
    """

    def __init__(
        self,
        plan: AttackPlan,
        tap: Tap,
        min_confidence: float = 0.9,
        oracle: bool = False,
        use_direction: bool = True,
    ):
        self.plan = plan
        self.tap = tap
        self.use_direction = use_direction
        self.handle = ClassifierHandle(oracle=oracle, min_confidence=min_confidence)

        self.arming_done = False
        self.mode = None  # type: Optional[str]
        self.confidence = None  # type: Optional[float]
        self.profile = None  # type: Optional[PtpProfileEstimate]
        self.sequence_profile = None  # type: Optional[SequenceProfile]

        self.log = []  # type: List[AttackLogRow]
        self.max_injected = 0
        self.n_delayed = 0

    @property
    def armed(self) -> bool:
        return self.handle.ready

    def arm(self, before: int):
        """Run the detector on observations seen before ``before``."""
        self.arming_done = True

        if self.handle.oracle:
            self.mode = "oracle"
            self.confidence = 1.0
            return

        frame = self.tap.frame()
        frame = frame[frame["seen_at"] < before]

        try:
            profile = detector.detect(frame, use_direction=self.use_direction)
        except (MotifNotFoundError, ValueError) as exc:
            logger.info("Timing profile not found: %s", exc)
            profile = None

        if profile is not None:
            self.profile = profile
            self.confidence = profile.confidence
            if profile.confidence >= self.handle.min_confidence:
                self.handle.profile = profile
                self.mode = "timing"
                logger.info("Adversary armed on timing profile (%.3f)", profile.confidence)
                return

        try:
            sequence = detector.fit_sequence_motif(frame)
        except MotifNotFoundError as exc:
            logger.info("Sequence profile not found: %s", exc)
            sequence = None

        if sequence is not None:
            self.sequence_profile = sequence
            self.confidence = max(self.confidence or 0.0, sequence.confidence)
            if sequence.confidence >= self.handle.min_confidence:
                classifier = SequenceClassifier(sequence)
                for obs in _frame_observations(frame):
                    classifier.feed(obs)
                self.handle.sequence = classifier
                self.mode = "sequence"
                logger.info("Adversary armed on sequence profile (%.3f)", sequence.confidence)
                return

        logger.warning(
            "Detector confidence %s below %.2f, adversary not armed",
            "n/a" if self.confidence is None else "{:.3f}".format(self.confidence),
            self.handle.min_confidence,
        )

    def decide(self, obs: Observation, now: int, truth: Optional[MessageKind] = None) -> DelayValue:
        """Decide the delay for the envelope behind ``obs``."""
        plan = self.plan
        in_window = now in plan.window

        if plan.needs_classifier and not self.arming_done and now >= plan.window.start:
            self.arm(plan.window.start)

        if not plan.needs_classifier:
            delay = decide_delay(obs, plan, self.handle, now, truth)
            kind = UNCLASSIFIED
        elif self.handle.ready:
            # Label every observation once; the sequence classifier is stateful
            label = self.handle.label(obs, truth)
            delay = delay_for_label(plan, label, now) if in_window else 0
            kind = detector.NOISE if label is None else label.value
        else:
            delay = 0
            kind = detector.NOISE

        if in_window and not isinstance(plan, NoAttack):
            self.log.append(AttackLogRow(now, kind, delay))
            if delay:
                self.n_delayed += 1
                self.max_injected = max(self.max_injected, delay)

        return delay

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.log, columns=list(AttackLogRow._fields))


def _frame_observations(frame: pd.DataFrame):
    for seen_at, length, direction in zip(frame["seen_at"], frame["length"], frame["direction"]):
        yield Observation(int(seen_at), int(length), Direction(direction))
