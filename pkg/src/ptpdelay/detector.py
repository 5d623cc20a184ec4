"""
Traffic analysis of encrypted PTP.

From observations that carry only time, wire length and direction, recover
the PTP profile (cycle period t3, lags t0/t1/t2, lengths x and y) and label
each observation with a :py:class:`~ptpdelay.ptp.MessageKind`.

Time is discretized into 1 ms bins. At most one packet is kept per bin.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ptpdelay.netmodel import (
    OBSERVATION_COLUMNS,
    Direction,
    Observation,
    noise_source,
    observations_to_frame,
)
from ptpdelay.ptp import CYCLE_KINDS, MessageKind
from ptpdelay.simcore import NS_PER_MS, NS_PER_S

logger = logging.getLogger(__name__)

__all__ = [
    "BIN",
    "InsufficientOccurrencesError",
    "MotifNotFoundError",
    "AmbiguousMotifError",
    "LowConfidenceError",
    "BinnedStream",
    "PeriodCandidate",
    "PtpProfileEstimate",
    "ClassifiedObservation",
    "discretize",
    "estimate_period",
    "fit_motif",
    "classify",
    "classify_frame",
    "detect",
    "SequenceProfile",
    "fit_sequence_motif",
    "SequenceClassifier",
    "random_profile",
    "generate_observations",
    "NOISE",
]

BIN = NS_PER_MS

#: Label of observations that are not PTP
NOISE = "Noise"

#: Direction placeholder when the direction field is withheld
ANY_DIRECTION = "*"

ObservationsLike = Union[pd.DataFrame, Iterable[Observation]]


class InsufficientOccurrencesError(ValueError):
    """Raised when a class has too few occurrences for period estimation."""


class MotifNotFoundError(ValueError):
    """Raised when no MS, MS, SM, MS motif can be fitted."""


class AmbiguousMotifError(MotifNotFoundError):
    """Raised when the DelayReq slot cannot be told apart from the others."""


class LowConfidenceError(ValueError):
    """Raised when classifying with a profile below the confidence threshold."""


def as_frame(observations: ObservationsLike) -> pd.DataFrame:
    if isinstance(observations, pd.DataFrame):
        return observations
    return observations_to_frame(observations)


@dataclass
class BinnedStream:
    """
    One packet per 1 ms bin.

    Attributes:
        frame: Columns ``bin, seen_at, length, direction``, ordered by bin.
        collisions: Number of packets dropped because their bin was taken.
    """

    frame: pd.DataFrame
    collisions: int = 0

    def __len__(self):
        return len(self.frame)

    @property
    def first_bin(self) -> int:
        return int(self.frame["bin"].iloc[0])

    @property
    def last_bin(self) -> int:
        return int(self.frame["bin"].iloc[-1])

    @property
    def window(self) -> int:
        """Number of bins between the first and last packet, inclusive."""
        if not len(self):
            return 0
        return self.last_bin - self.first_bin + 1

    def directions(self, use_direction: bool = True) -> np.ndarray:
        if use_direction:
            return self.frame["direction"].to_numpy()
        return np.full(len(self.frame), ANY_DIRECTION, dtype=object)

    def class_bins(self, length: int, direction: Optional[str] = None) -> np.ndarray:
        mask = self.frame["length"].to_numpy() == length
        if direction is not None and direction != ANY_DIRECTION:
            mask &= self.frame["direction"].to_numpy() == str(direction)
        return self.frame["bin"].to_numpy()[mask]

    def class_counts(self, use_direction: bool = True) -> pd.Series:
        """Occurrences per (length, direction), most frequent first."""
        keys = pd.DataFrame(
            {"length": self.frame["length"], "direction": self.directions(use_direction)}
        )
        counts = keys.groupby(["length", "direction"]).size()
        order = sorted(counts.index, key=lambda k: (-counts[k], k[0], k[1]))
        return counts.loc[order]


def discretize(observations: ObservationsLike, bin_width: int = BIN) -> BinnedStream:
    """Bin observations by ``floor(seen_at / bin_width)``, keeping the earliest per bin."""
    frame = as_frame(observations)

    if not len(frame):
        empty = pd.DataFrame(
            {
                "bin": pd.Series([], dtype="int64"),
                "seen_at": pd.Series([], dtype="int64"),
                "length": pd.Series([], dtype="int64"),
                "direction": pd.Series([], dtype=object),
            }
        )
        return BinnedStream(empty, 0)

    seen_at = frame["seen_at"].to_numpy()
    if np.any(np.diff(seen_at) < 0):
        raise ValueError("observations must be sorted by seen_at")

    bins = seen_at // bin_width
    _, first = np.unique(bins, return_index=True)

    kept = frame[OBSERVATION_COLUMNS].iloc[first].reset_index(drop=True)
    kept.insert(0, "bin", bins[first])
    collisions = len(frame) - len(kept)

    if collisions:
        logger.debug("%d of %d observations collided in a bin", collisions, len(frame))

    return BinnedStream(kept, collisions)


class PeriodCandidate(NamedTuple):
    period: int
    score: float
    support: int

    @property
    def bins(self) -> int:
        return self.period // BIN


def _hits(positions: np.ndarray, occupied: np.ndarray, tolerance: int) -> np.ndarray:
    hit = np.zeros(len(positions), dtype=bool)
    for off in range(-tolerance, tolerance + 1):
        hit |= np.isin(positions + off, occupied)
    return hit


def estimate_period(
    stream: BinnedStream,
    length: int,
    direction: Optional[str],
    max_period: int = 4000,
    min_support: float = 0.05,
    tolerance: int = 1,
    harmonic_ratio: float = 0.8,
) -> List[PeriodCandidate]:
    """
    Candidate repetition periods of one (length, direction) class.

    A candidate T scores the fraction of occurrences (with ``b + T`` inside the
    stream) that have a successor of the same class at ``b + T ± tolerance``.
    Candidates come from the lag histogram (lags seen at least
    ``max(2, min_support·n)`` times, up to ``max_period`` bins).

    Returns:
        The fundamental period first: the smallest candidate that scores at
        least ``harmonic_ratio`` of the best score and divides the best
        candidate. The others follow sorted by score, exact-successor
        support and period.
    """
    b = stream.class_bins(length, direction)
    n = len(b)
    if n < 3:
        raise InsufficientOccurrencesError(
            "{} occurrence(s) of ({}, {}), need at least 3".format(n, length, direction)
        )

    diffs = []
    for k in range(1, n):
        d = b[k:] - b[:-k]
        d = d[d <= max_period]
        if not len(d):
            break
        diffs.append(d)

    if not diffs:
        return []

    histogram = np.bincount(np.concatenate(diffs), minlength=max_period + 1)
    threshold = max(2, math.ceil(min_support * n))
    lags = np.flatnonzero(histogram >= threshold)
    lags = lags[lags > tolerance]

    last = b[-1]
    candidates = []
    for lag in lags:
        eligible = b[b + lag <= last]
        if not len(eligible):
            continue
        target = eligible + lag
        score = float(_hits(target, b, tolerance).mean())
        support = int(np.isin(target, b).sum())
        candidates.append(PeriodCandidate(int(lag) * BIN, score, support))

    if not candidates:
        return candidates

    candidates.sort(key=lambda c: (-c.score, -c.support, c.period))
    base = _fundamental(candidates, harmonic_ratio, tolerance)
    candidates.remove(base)
    candidates.insert(0, base)
    return candidates


def _fundamental(
    candidates: List[PeriodCandidate], harmonic_ratio: float, tolerance: int
) -> PeriodCandidate:
    """
    Smallest period of which the best candidate is a multiple.

    Multiples of the true period score as high as the period itself, so the
    best-scoring candidate is folded down to the smallest near-best candidate
    dividing it. Among neighbouring lags (``± tolerance``) the one with the
    most exact successors wins.
    """
    best = candidates[0]
    near = sorted(
        (c for c in candidates if c.score >= harmonic_ratio * best.score),
        key=lambda c: c.period,
    )

    for i, base in enumerate(near):
        m = max(1, round(best.bins / base.bins))
        if abs(best.bins - m * base.bins) <= tolerance:
            break

    run = [base]
    for c in near[i + 1 :]:
        if c.bins - run[-1].bins > tolerance:
            break
        run.append(c)

    return max(run, key=lambda c: (c.support, c.score, -c.period))


class _Cluster(NamedTuple):
    length: int
    direction: str
    phase: int
    weight: int


def _cluster_cells(
    cells: Dict[int, int], period: int, merge_ratio: float
) -> List[Tuple[int, int]]:
    """Group significant phase cells into (peak phase, weight) clusters."""
    peak_of = {}  # phase -> index of its cluster
    clusters = []  # [peak phase, peak count, weight]

    for phase, count in sorted(cells.items(), key=lambda pc: (-pc[1], pc[0])):
        for neighbour in ((phase - 1) % period, (phase + 1) % period):
            index = peak_of.get(neighbour)
            if index is not None and count < merge_ratio * clusters[index][1]:
                clusters[index][2] += count
                peak_of[phase] = index
                break
        else:
            peak_of[phase] = len(clusters)
            clusters.append([phase, count, count])

    return [(c[0], c[2]) for c in clusters]


@dataclass
class PtpProfileEstimate:
    """
    Recovered PTP traffic profile. Durations and phases are in ns.

    ``t1`` and ``t2`` are lags as seen by the observer, not by the endpoints.
    """

    t3: int
    t0: int
    t1: int
    t2: int
    x: int
    x_req: int
    sync_phase: int
    confidence: float
    y: Optional[int] = None
    announce_period: Optional[int] = None
    announce_phase: Optional[int] = None
    use_direction: bool = True
    collisions: int = 0

    def __post_init__(self):
        for name in ("t0", "t1", "t2"):
            value = getattr(self, name)
            if not 0 <= value < self.t3:
                raise ValueError("{}={} must lie in [0, t3)".format(name, value))

    @property
    def slot_offsets(self) -> Dict[MessageKind, int]:
        """Phase of each cycle message relative to Sync."""
        return {
            MessageKind.SYNC: 0,
            MessageKind.FOLLOW_UP: self.t0,
            MessageKind.DELAY_REQ: self.t0 + self.t1,
            MessageKind.DELAY_RESP: self.t0 + self.t1 + self.t2,
        }

    def slot_signature(self, kind: MessageKind) -> Tuple[int, str]:
        """Expected (length, direction) of a cycle message."""
        if kind is MessageKind.DELAY_REQ:
            return self.x_req, Direction.SLAVE_TO_MASTER.value
        return self.x, Direction.MASTER_TO_SLAVE.value


def fit_motif(
    stream: BinnedStream,
    t3: int,
    use_direction: bool = True,
    significance: float = 0.25,
    merge_ratio: float = 0.5,
    min_announce_score: float = 0.1,
    tolerance: int = 1,
) -> PtpProfileEstimate:
    """
    Fold the stream modulo ``t3`` and fit the MS, MS, SM, MS cycle motif.

    A phase cell is significant when its class fills it in at least
    ``significance`` of the cycles. DelayReq is the strongest SM cluster;
    the cycle length ``x`` is the MS length with the strongest three clusters.
    Without direction, DelayReq must be told apart by its length alone.

    Raises:
        MotifNotFoundError: If fewer than four suitable clusters exist.
        AmbiguousMotifError: If direction is withheld and DelayReq has the
            same length as the other cycle messages.
    """
    t3b = t3 // BIN
    if t3b < 4:
        raise MotifNotFoundError("period {} ns is too short for a motif".format(t3))
    if not len(stream):
        raise MotifNotFoundError("empty stream")

    n_cycles = math.ceil(stream.window / t3b)
    phases = stream.frame["bin"].to_numpy() % t3b
    keys = pd.DataFrame(
        {
            "length": stream.frame["length"].to_numpy(),
            "direction": stream.directions(use_direction),
            "phase": phases,
        }
    )
    cell_counts = keys.groupby(["length", "direction", "phase"]).size()
    cell_counts = cell_counts[cell_counts >= significance * n_cycles]

    clusters = []  # type: List[_Cluster]
    for (length, direction), cells in cell_counts.groupby(level=[0, 1]):
        cells = {int(p): int(c) for (_, _, p), c in cells.items()}
        for phase, weight in _cluster_cells(cells, t3b, merge_ratio):
            clusters.append(_Cluster(int(length), direction, phase, weight))

    def by_strength(cluster):
        return (-cluster.weight, cluster.phase)

    def strongest_three(candidates):
        per_length = {}
        for c in candidates:
            per_length.setdefault(c.length, []).append(c)
        best = None
        for length, group in sorted(per_length.items()):
            if len(group) < 3:
                continue
            group = sorted(group, key=by_strength)
            key = (sum(c.weight for c in group[:3]), -length)
            if best is None or key > best[0]:
                best = (key, group)
        return None if best is None else best[1]

    ms = Direction.MASTER_TO_SLAVE.value
    sm = Direction.SLAVE_TO_MASTER.value

    if use_direction:
        requests = sorted((c for c in clusters if c.direction == sm), key=by_strength)
        group = strongest_three(c for c in clusters if c.direction == ms)
        if not requests or group is None:
            raise MotifNotFoundError(
                "No MS, MS, SM, MS motif at period {} ms".format(t3b)
            )
        request = requests[0]
        cycle = group[:3]
    else:
        group = strongest_three(clusters)
        if group is None:
            raise MotifNotFoundError("No motif at period {} ms".format(t3b))
        if len(group) >= 4 and group[3].weight >= merge_ratio * group[2].weight:
            raise AmbiguousMotifError(
                "Four equal-length slots at period {} ms: DelayReq cannot be "
                "identified without direction".format(t3b)
            )
        others = sorted((c for c in clusters if c.length != group[0].length), key=by_strength)
        if not others:
            raise MotifNotFoundError("No distinct DelayReq slot at period {} ms".format(t3b))
        request = others[0]
        cycle = group[:3]

    slots = sorted(cycle + [request], key=lambda c: c.phase)
    i = slots.index(request)
    slots = [slots[(i - 2 + k) % 4] for k in range(4)]
    sync, follow_up, _, delay_resp = slots

    x = cycle[0].length
    t0 = (follow_up.phase - sync.phase) % t3b
    t1 = (request.phase - follow_up.phase) % t3b
    t2 = (delay_resp.phase - request.phase) % t3b

    profile = PtpProfileEstimate(
        t3=t3b * BIN,
        t0=t0 * BIN,
        t1=t1 * BIN,
        t2=t2 * BIN,
        x=x,
        x_req=request.length,
        sync_phase=sync.phase * BIN,
        confidence=0.0,
        use_direction=use_direction,
        collisions=stream.collisions,
    )

    profile = _fit_announce(stream, profile, use_direction, min_announce_score)
    profile.confidence = _slot_confidence(stream, profile, tolerance)

    logger.info(
        "Fitted motif t3=%d ms t0=%d t1=%d t2=%d x=%d y=%s confidence=%.3f",
        t3b,
        t0,
        t1,
        t2,
        x,
        profile.y,
        profile.confidence,
    )

    return profile


def _fit_announce(stream, profile, use_direction, min_score):
    best = None
    counts = stream.class_counts(use_direction)
    excluded = {profile.x, profile.x_req} if not use_direction else {profile.x}

    for (length, direction), n in counts.items():
        if length in excluded:
            continue
        if use_direction and direction != Direction.MASTER_TO_SLAVE.value:
            continue
        try:
            candidates = estimate_period(stream, length, direction)
        except InsufficientOccurrencesError:
            continue
        if not candidates or candidates[0].score < min_score:
            continue
        key = (candidates[0].score, n)
        if best is None or key > best[0]:
            best = (key, length, direction, candidates[0])

    if best is None:
        return profile

    _, length, direction, candidate = best
    period_b = candidate.bins
    phases = stream.class_bins(length, direction) % period_b
    phase = int(np.bincount(phases, minlength=period_b).argmax())

    return replace(
        profile,
        y=int(length),
        announce_period=candidate.period,
        announce_phase=phase * BIN,
    )


def _slot_confidence(stream, profile, tolerance) -> float:
    t3b = profile.t3 // BIN
    sync_phase = profile.sync_phase // BIN
    offsets = {k: v // BIN for k, v in profile.slot_offsets.items()}
    span = max(offsets.values())

    first, last = stream.first_bin, stream.last_bin
    k0 = math.ceil((first - sync_phase) / t3b)
    k1 = (last - span - sync_phase) // t3b
    if k1 < k0:
        return 0.0

    starts = sync_phase + np.arange(k0, k1 + 1) * t3b
    filled = expected = 0
    for kind in CYCLE_KINDS:
        length, direction = profile.slot_signature(kind)
        occupied = stream.class_bins(
            length, direction if profile.use_direction else None
        )
        filled += int(_hits(starts + offsets[kind], occupied, tolerance).sum())
        expected += len(starts)

    return filled / expected


class ClassifiedObservation(NamedTuple):
    observation: Observation
    label: Optional[MessageKind]
    residual: Optional[int]

    @property
    def label_name(self) -> str:
        return NOISE if self.label is None else self.label.value


def _circular_residual(phase: int, expected: int, period: int) -> int:
    return (phase - expected + period // 2) % period - period // 2


def _label_bin(
    bin_: int, length: int, direction: str, profile: PtpProfileEstimate, tolerance: int
) -> Tuple[Optional[MessageKind], Optional[int]]:
    t3b = profile.t3 // BIN
    phase = (bin_ - profile.sync_phase // BIN) % t3b

    best = None
    for kind, offset in profile.slot_offsets.items():
        exp_length, exp_direction = profile.slot_signature(kind)
        if length != exp_length:
            continue
        if profile.use_direction and direction != exp_direction:
            continue
        residual = _circular_residual(phase, offset // BIN, t3b)
        if abs(residual) <= tolerance and (best is None or abs(residual) < abs(best[1])):
            best = (kind, residual)

    if best is not None:
        return best[0], best[1] * BIN

    if profile.y is not None and length == profile.y:
        if not profile.use_direction or direction == Direction.MASTER_TO_SLAVE.value:
            period = profile.announce_period // BIN
            residual = _circular_residual(
                bin_ % period, profile.announce_phase // BIN, period
            )
            if abs(residual) <= tolerance:
                return MessageKind.ANNOUNCE, residual * BIN

    return None, None


def check_confidence(profile: PtpProfileEstimate, min_confidence: float):
    if profile.confidence < min_confidence:
        raise LowConfidenceError(
            "Profile confidence {:.3f} is below {:.3f}".format(
                profile.confidence, min_confidence
            )
        )


def classify(
    obs: Observation,
    profile: PtpProfileEstimate,
    tolerance: int = 1,
    min_confidence: float = 0.9,
) -> ClassifiedObservation:
    """Label ``obs`` with the motif slot it matches within ±``tolerance`` bins, else Noise."""
    check_confidence(profile, min_confidence)
    label, residual = _label_bin(
        obs.seen_at // BIN, obs.wire_length, obs.direction.value, profile, tolerance
    )
    return ClassifiedObservation(obs, label, residual)


def classify_frame(
    observations: ObservationsLike,
    profile: PtpProfileEstimate,
    tolerance: int = 1,
    min_confidence: float = 0.9,
) -> pd.DataFrame:
    """Vectorized :py:func:`classify`. Adds a ``label`` column."""
    check_confidence(profile, min_confidence)
    frame = as_frame(observations)[OBSERVATION_COLUMNS].reset_index(drop=True)

    bins = frame["seen_at"].to_numpy() // BIN
    lengths = frame["length"].to_numpy()
    directions = frame["direction"].to_numpy()
    labels = np.full(len(frame), NOISE, dtype=object)

    t3b = profile.t3 // BIN
    phase = (bins - profile.sync_phase // BIN) % t3b
    best = np.full(len(frame), tolerance + 1)

    for kind, offset in profile.slot_offsets.items():
        length, direction = profile.slot_signature(kind)
        mask = lengths == length
        if profile.use_direction:
            mask &= directions == direction
        residual = np.abs((phase - offset // BIN + t3b // 2) % t3b - t3b // 2)
        mask &= residual < best
        labels[mask] = kind.value
        best[mask] = residual[mask]

    if profile.y is not None:
        period = profile.announce_period // BIN
        mask = (labels == NOISE) & (lengths == profile.y)
        if profile.use_direction:
            mask &= directions == Direction.MASTER_TO_SLAVE.value
        residual = (bins % period - profile.announce_phase // BIN + period // 2) % period - period // 2
        labels[mask & (np.abs(residual) <= tolerance)] = MessageKind.ANNOUNCE.value

    frame["label"] = labels
    return frame


def detect(
    observations: ObservationsLike,
    use_direction: bool = True,
    max_period: int = 4000,
    min_score: float = 0.2,
) -> PtpProfileEstimate:
    """
    Estimate the PTP profile of an observation stream end to end.

    Every MS class whose fundamental period scores at least ``min_score`` is
    a cycle class candidate. Candidates are tried in order of exact periodic
    repetitions (support), so frequent aperiodic traffic such as cover
    packets does not hide the PTP class.
    """
    stream = discretize(observations)
    counts = stream.class_counts(use_direction)
    if use_direction:
        counts = counts[
            [k[1] == Direction.MASTER_TO_SLAVE.value for k in counts.index]
        ]

    periodic = []
    for (length, direction), n in counts.items():
        # Support never exceeds the number of occurrences
        if n < 3 or (periodic and n <= max(p[0].support for p in periodic)):
            break
        candidates = estimate_period(stream, length, direction, max_period)
        if candidates and candidates[0].score >= min_score:
            periodic.append((candidates[0], length, direction))

    periodic.sort(key=lambda p: (-p[0].support, -p[0].score, p[1]))
    for candidate, length, direction in periodic:
        logger.info(
            "Cycle class (%d B, %s) repeats every %d ms (score %.3f)",
            length,
            direction,
            candidate.bins,
            candidate.score,
        )
        try:
            return fit_motif(stream, candidate.period, use_direction)
        except AmbiguousMotifError:
            raise
        except MotifNotFoundError as exc:
            logger.info("No motif in class (%d B, %s): %s", length, direction, exc)

    raise MotifNotFoundError("No periodic MS class among {} observations".format(len(stream)))


@dataclass
class SequenceProfile:
    """
    Token-order profile: the cycle is the token pattern MS x, MS x, SM x_req, MS x.

    ``confidence`` is the share of (SM, x_req) tokens that sit in that pattern.
    """

    x: int
    x_req: int
    confidence: float
    occurrences: int = 0


def fit_sequence_motif(observations: Union[ObservationsLike, BinnedStream]) -> SequenceProfile:
    stream = observations if isinstance(observations, BinnedStream) else discretize(observations)
    lengths = stream.frame["length"].to_numpy()
    is_ms = stream.frame["direction"].to_numpy() == Direction.MASTER_TO_SLAVE.value
    n = len(lengths)

    if n < 4 or is_ms.all():
        raise MotifNotFoundError("No SM tokens to anchor a sequence motif")

    i = np.arange(2, n - 1)
    in_pattern = (
        ~is_ms[i]
        & is_ms[i - 2]
        & is_ms[i - 1]
        & is_ms[i + 1]
        & (lengths[i - 2] == lengths[i - 1])
        & (lengths[i - 1] == lengths[i + 1])
    )

    hits = pd.Series(in_pattern.astype(int), index=lengths[i]).groupby(level=0).sum()
    if not len(hits) or hits.max() == 0:
        raise MotifNotFoundError("No MS, MS, SM, MS token pattern found")

    x_req = int(hits.sort_index().idxmax())
    occurrences = int(np.sum(~is_ms & (lengths == x_req)))
    pattern_at = i[in_pattern & (lengths[i] == x_req)]
    x = int(pd.Series(lengths[pattern_at - 1]).mode().iloc[0])

    confidence = int(hits[x_req]) / occurrences
    logger.info("Sequence motif x=%d x_req=%d confidence=%.3f", x, x_req, confidence)

    return SequenceProfile(x, x_req, confidence, occurrences)


class SequenceClassifier:
    """
    Online labelling by token order alone.

    After a DelayReq, the next three (MS, x) tokens are DelayResp, Sync and
    FollowUp. Tokens that do not fit the pattern are Noise.
    """

    def __init__(self, profile: SequenceProfile):
        self.profile = profile
        self._history = []  # type: List[Tuple[str, int]]
        self._expect = None  # type: Optional[MessageKind]

    def feed(self, obs: Observation) -> Optional[MessageKind]:
        token = (obs.direction.value, obs.wire_length)
        cycle_token = (Direction.MASTER_TO_SLAVE.value, self.profile.x)
        request_token = (Direction.SLAVE_TO_MASTER.value, self.profile.x_req)

        label = None
        if token == request_token and self._history[-2:] == [cycle_token, cycle_token]:
            label = MessageKind.DELAY_REQ
            self._expect = MessageKind.DELAY_RESP
        elif token == cycle_token and self._expect is not None:
            label = self._expect
            self._expect = {
                MessageKind.DELAY_RESP: MessageKind.SYNC,
                MessageKind.SYNC: MessageKind.FOLLOW_UP,
                MessageKind.FOLLOW_UP: None,
            }[label]

        self._history = (self._history + [token])[-2:]
        return label


def random_profile(
    rng: np.random.Generator,
    t0_range=(1, 10),
    t1_range=(1, 20),
    t2_range=(1, 20),
    t3_choices=(125, 250, 500, 1000),
    length_range=(64, 1500),
    announce_period: int = 2000,
) -> PtpProfileEstimate:
    """Draw a random synthetic profile (all ranges in ms / bytes)."""
    t3 = int(rng.choice(t3_choices))
    t0 = int(rng.integers(t0_range[0], t0_range[1] + 1))
    t1 = int(rng.integers(t1_range[0], t1_range[1] + 1))
    t2 = int(rng.integers(t2_range[0], t2_range[1] + 1))
    sync_phase = int(rng.integers(0, t3))
    x, y = (int(v) for v in rng.choice(np.arange(length_range[0], length_range[1] + 1), 2, replace=False))

    slots = [(sync_phase + o) % t3 for o in (0, t0, t0 + t1, t0 + t1 + t2)]
    free = [
        p
        for p in range(announce_period)
        if all(abs(_circular_residual(p % t3, s, t3)) >= 2 for s in slots)
    ]
    announce_phase = int(rng.choice(free))

    return PtpProfileEstimate(
        t3=t3 * BIN,
        t0=t0 * BIN,
        t1=t1 * BIN,
        t2=t2 * BIN,
        x=x,
        x_req=x,
        sync_phase=sync_phase * BIN,
        confidence=1.0,
        y=y,
        announce_period=announce_period * BIN,
        announce_phase=announce_phase * BIN,
    )


def generate_observations(
    profile: PtpProfileEstimate,
    duration: int,
    rng: np.random.Generator,
    noise_p: float = 0.0,
    noise_length_range=(64, 1500),
) -> pd.DataFrame:
    """
    Labelled synthetic observation stream for ``profile``.

    Every packet lands at a uniform position inside the bin of its nominal
    time, so PTP and noise sharing a bin keep whichever came first. The
    ``label`` column holds the message kind or ``Noise``.
    """

    def in_bin(times):
        return times + rng.integers(0, BIN, len(times))

    rows = []
    for kind, offset in profile.slot_offsets.items():
        length, direction = profile.slot_signature(kind)
        times = in_bin(np.arange(profile.sync_phase + offset, duration, profile.t3))
        rows.append(pd.DataFrame({"seen_at": times, "length": length, "direction": direction, "label": kind.value}))

    if profile.y is not None:
        times = in_bin(np.arange(profile.announce_phase, duration, profile.announce_period))
        rows.append(
            pd.DataFrame(
                {
                    "seen_at": times,
                    "length": profile.y,
                    "direction": Direction.MASTER_TO_SLAVE.value,
                    "label": MessageKind.ANNOUNCE.value,
                }
            )
        )

    noise = noise_source(noise_p, noise_length_range, duration, rng)
    noise["label"] = NOISE
    rows.append(noise)

    frame = pd.concat(rows, ignore_index=True)
    frame = frame.sort_values("seen_at", kind="mergesort", ignore_index=True)
    return frame.astype({"seen_at": "int64", "length": "int64"})
