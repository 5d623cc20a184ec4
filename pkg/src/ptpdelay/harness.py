"""
End-to-end simulation of a scenario, ground-truth oracle and parameter sweeps.
"""

import functools
import itertools
import logging
import math
import multiprocessing
import pathlib
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.stats

from ptpdelay import detector
from ptpdelay.adversary import Adversary, NoAttack
from ptpdelay.core import (
    Call,
    Node,
    Output,
    Pipeline,
    ReturnOutputs,
    closing_stream,
)
from ptpdelay.detector import MotifNotFoundError
from ptpdelay.guard import (
    ConstraintViolationError,
    ReplayWindow,
    RoundTripComparator,
    RtdGate,
    apply_padding,
    bound_offset,
    replay_check,
    residual_uncertainty,
    system_bound,
    timing_source,
)
from ptpdelay.netmodel import (
    Delivery,
    Direction,
    Envelope,
    Link,
    Tap,
    cover_traffic,
    noise_source,
)
from ptpdelay.ptp import (
    Master,
    Message,
    MessageKind,
    Slave,
    SyncCycle,
    compute_offset,
    compute_rtd,
    servo_apply,
)
from ptpdelay.scenario import Scenario, ScenarioError
from ptpdelay.simcore import EventLoop, trunc_div
from ptpdelay.stream import Progress, Unpack
from ptpdelay.trace import TraceWriter, write_key_values, write_trace

logger = logging.getLogger(__name__)

__all__ = [
    "VIOLATION_KEYS",
    "InvariantViolationError",
    "OracleCycle",
    "OracleView",
    "Decomposition",
    "oracle_decompose",
    "RunResult",
    "Simulation",
    "run_scenario",
    "write_result",
    "check_invariants",
    "IndistinguishabilityReport",
    "indistinguishability_report",
    "grid_points",
    "sweep",
]

MS = Direction.MASTER_TO_SLAVE
SM = Direction.SLAVE_TO_MASTER

VIOLATION_KEYS = (
    "bound_violations",
    "midpoint_violations",
    "constraint_violations",
    "identity_violations",
)


class InvariantViolationError(RuntimeError):
    """Raised when a run breaks a guaranteed property."""


def ceil_half(value: int) -> int:
    return -(-abs(value) // 2)


@dataclass
class OracleCycle:
    """
    Ground truth of one cycle.

    ``theta_*`` are true slave-minus-master offsets at Sync arrival and at
    DelayReq departure; ``free_theta_*`` the same without any correction.
    ``span_ms``/``span_sm`` are the master-clock readings of the two one-way
    delays.
    """

    seq: int
    sync_delivery: Optional[Delivery] = None
    theta_sync: Optional[int] = None
    free_theta_sync: Optional[int] = None
    span_ms: Optional[int] = None
    req_delivery: Optional[Delivery] = None
    theta_req: Optional[int] = None
    free_theta_req: Optional[int] = None
    span_sm: Optional[int] = None
    sync_sent_at: Optional[int] = None
    req_sent_at: Optional[int] = None

    @property
    def complete(self) -> bool:
        return None not in (self.span_ms, self.span_sm, self.theta_sync, self.theta_req)

    @property
    def offset_real(self) -> int:
        return trunc_div(self.theta_sync + self.theta_req, 2)

    @property
    def drift_offset(self) -> int:
        return trunc_div(self.free_theta_sync + self.free_theta_req, 2)


class OracleView:
    """Per-cycle ground truth, available to the harness only."""

    def __init__(self):
        self.cycles = {}  # type: Dict[int, OracleCycle]

    def __getitem__(self, seq: int) -> OracleCycle:
        try:
            return self.cycles[seq]
        except KeyError:
            cycle = self.cycles[seq] = OracleCycle(seq)
            return cycle

    def __contains__(self, seq: int) -> bool:
        return seq in self.cycles


class Decomposition(NamedTuple):
    """``measured offset = offset_real + asymmetry_term`` (± tolerance)."""

    offset_real: int
    asymmetry_term: int
    link_part: int
    jitter_part: int
    attack_part: int
    drift_offset: int
    tolerance: int


def oracle_decompose(cycle: SyncCycle, oracle: OracleView) -> Decomposition:
    """
    Split the measured offset of ``cycle`` into the real offset and half the
    realized delay asymmetry.

    The asymmetry term is ``(owd_ms − owd_sm) / 2``: delaying master→slave
    traffic makes the measured offset larger than the real one.
    """
    o = oracle[cycle.seq]
    if not o.complete:
        raise ValueError("No ground truth for cycle {}".format(cycle.seq))

    fwd, back = o.sync_delivery, o.req_delivery

    def half(a, b):
        return trunc_div(a - b, 2)

    # Master clock rate error over the two one-way delays
    rate_error = (o.span_ms - fwd.owd) - (o.span_sm - back.owd)

    return Decomposition(
        offset_real=o.offset_real,
        asymmetry_term=half(fwd.owd, back.owd),
        link_part=half(fwd.delta + fwd.tx, back.delta + back.tx),
        jitter_part=half(fwd.jitter + fwd.hold, back.jitter + back.hold),
        attack_part=half(fwd.attack, back.attack),
        drift_offset=o.drift_offset,
        tolerance=1 + ceil_half(rate_error),
    )


@dataclass
class RunResult:
    scenario: Scenario
    sync: pd.DataFrame
    bound: pd.DataFrame
    observations: pd.DataFrame
    attack: pd.DataFrame
    summary: Dict[str, Any]
    oracle: OracleView
    cycles: List[SyncCycle] = field(default_factory=list)
    decompositions: pd.DataFrame = None


class Simulation:
    """
    Wires clocks, link, tap, adversary, guard and PTP engine of a scenario
    onto one event loop.
    """

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = s = scenario
        self.horizon = s.duration_ns

        seeds = np.random.SeedSequence(s.seed).spawn(8)
        rngs = [np.random.default_rng(seq) for seq in seeds]
        (rng_link, rng_noise, rng_cover_ms, rng_cover_sm, rng_master, rng_slave) = rngs[:6]
        wander_seeds = [int(seq.generate_state(1)[0]) for seq in seeds[6:]]

        self.loop = EventLoop()
        self.master_clock = s.master.build("master", wander_seeds[0])
        self.slave_clock = s.slave.build("slave", wander_seeds[1])

        self.profile = s.link.build()
        self.link = Link(self.profile, rng_link)
        self.tap = Tap(self.profile)

        self.engine = s.engine.build()
        randomization = s.guard.timing_randomization()
        master_timing = slave_timing = None
        if randomization.enabled:
            master_timing = timing_source(self.engine, randomization, rng_master)
            slave_timing = timing_source(self.engine, randomization, rng_slave)
        self.master = Master(self.master_clock, self.engine, master_timing)
        self.slave = Slave(self.slave_clock, self.engine, slave_timing)

        self.scheme = s.encryption.build()
        self.padding = s.guard.padding_policy()
        self.replay_policy = s.guard.replay_policy()
        self.replay = {d: ReplayWindow(self.replay_policy) for d in Direction}
        self._seq = {d: 0 for d in Direction}
        self._last_cover = {d: None for d in Direction}
        self.max_cover_gap = {d: None for d in Direction}

        self.plan = s.attack.build()
        self.adversary = Adversary(
            self.plan,
            self.tap,
            min_confidence=s.attack.min_confidence,
            oracle=s.attack.oracle,
            use_direction=s.attack.use_direction,
        )

        self.servo = s.servo.build() if s.servo.enabled else None
        self.constraints = s.guard.constraints()
        self.gate = RtdGate(s.guard.rtd_max_ns)
        self.system_params = s.guard.system_bound_params(self.engine)
        self.comparator = RoundTripComparator(self.constraints, s.guard.roundtrip_factor)

        self.oracle = OracleView()
        self.cycles = []  # type: List[SyncCycle]
        self.sync_rows = []  # type: List[tuple]
        self.bound_rows = []  # type: List[tuple]
        self.decomposition_rows = []  # type: List[dict]
        self.counters = dict.fromkeys(
            VIOLATION_KEYS + ("replay_rejections_ms", "replay_rejections_sm", "max_accepted_attack_ns"),
            0,
        )
        self._master_wakeups = set()

        if s.noise.p > 0:
            self.tap.add_noise(
                noise_source(
                    s.noise.p, (s.noise.length_min, s.noise.length_max), self.horizon, rng_noise
                )
            )

        for direction, rate, rng in ((MS, s.cover.rate_ms, rng_cover_ms), (SM, s.cover.rate_sm, rng_cover_sm)):
            if rate > 0:
                cover = cover_traffic(
                    rate, (s.cover.length_min, s.cover.length_max), self.horizon, rng
                )
                for send_at, length in zip(cover["send_at"], cover["length"]):
                    self.loop.schedule(
                        int(send_at),
                        functools.partial(self._send, None, int(length), direction),
                    )

        self._wake_master()

    # Transport

    def _send(self, msg: Optional[Message], plain_length: int, direction: Direction):
        now = self.loop.now
        self._seq[direction] += 1

        if msg is None:
            self._track_cover_gap(direction, now)

        kind = None if msg is None else msg.kind
        env = Envelope(
            plain_length,
            apply_padding(plain_length, self.padding, self.scheme),
            now,
            direction,
            self._seq[direction],
            payload_kind=kind,
            payload=msg,
        )

        obs = self.tap.record(env)
        delay = self.adversary.decide(obs, obs.seen_at, truth=kind)
        delivery = self.link.transmit(env, delay, self.plan.hold_successors)

        if delivery is None:
            return

        if kind is MessageKind.SYNC:
            o = self.oracle[msg.seq]
            o.sync_delivery, o.sync_sent_at = delivery, now
        elif kind is MessageKind.DELAY_REQ:
            o = self.oracle[msg.seq]
            o.req_delivery, o.req_sent_at = delivery, now

        self.loop.schedule(delivery.arrival, functools.partial(self._deliver, env, delivery))

    def _track_cover_gap(self, direction: Direction, now: int):
        """Largest interval between two cover packets of one direction."""
        last = self._last_cover[direction]
        if last is not None:
            self.max_cover_gap[direction] = max(self.max_cover_gap[direction] or 0, now - last)
        self._last_cover[direction] = now

    def _deliver(self, env: Envelope, delivery: Delivery):
        now = self.loop.now

        if not replay_check(env.seq, self.replay_policy, self.replay[env.direction]):
            key = "replay_rejections_" + env.direction.value.lower()
            self.counters[key] += 1
            logger.debug("Replay window rejected %s seq=%d", env.direction, env.seq)
            return

        if delivery.attack:
            self.counters["max_accepted_attack_ns"] = max(
                self.counters["max_accepted_attack_ns"], delivery.attack
            )

        msg = env.payload
        if msg is None:
            return

        if env.direction is MS:
            if msg.kind is MessageKind.SYNC:
                o = self.oracle[msg.seq]
                o.theta_sync = self._theta(now)
                o.free_theta_sync = self._free_theta(now)
                o.span_ms = self.master_clock.local_time(now) - self.master_clock.local_time(o.sync_sent_at)

            step = self.slave.step(msg, now)
            if step.delay_req_at is not None and step.delay_req_at <= self.horizon:
                self.loop.schedule(step.delay_req_at, self._slave_send)
            if step.cycle is not None:
                self._complete(step.cycle, now)
        else:
            o = self.oracle[msg.seq]
            o.span_sm = self.master_clock.local_time(now) - self.master_clock.local_time(o.req_sent_at)
            self.master.receive(msg, now)
            self._wake_master()

    # Endpoints

    def _wake_master(self):
        due = self.master.next_due()
        if due is None or due > self.horizon or due in self._master_wakeups:
            return
        self._master_wakeups.add(due)
        self.loop.schedule(due, self._master_step)

    def _master_step(self):
        now = self.loop.now
        self._master_wakeups.discard(now)
        for msg in self.master.step(now):
            self._send(msg, msg.plain_length, MS)
        self._wake_master()

    def _slave_send(self):
        now = self.loop.now
        msg = self.slave.send_delay_req(now)
        if msg is None:
            return
        o = self.oracle[msg.seq]
        o.theta_req = self._theta(now)
        o.free_theta_req = self._free_theta(now)
        self._send(msg, msg.plain_length, SM)

    def _theta(self, t: int) -> int:
        return self.slave_clock.local_time(t) - self.master_clock.local_time(t)

    def _free_theta(self, t: int) -> int:
        return self.slave_clock.free_local_time(t) - self.master_clock.free_local_time(t)

    # Cycle completion

    def _complete(self, cycle: SyncCycle, now: int):
        self.cycles.append(cycle)
        rtd = compute_rtd(cycle)
        measured = compute_offset(cycle)
        o = self.oracle[cycle.seq]
        decomposition = oracle_decompose(cycle, self.oracle)
        true_offset = decomposition.offset_real

        residual = measured - (decomposition.offset_real + decomposition.asymmetry_term)
        if abs(residual) > decomposition.tolerance:
            self.counters["identity_violations"] += 1
            logger.error("Cycle %d: offset identity off by %d ns", cycle.seq, residual)

        try:
            bound = bound_offset(cycle, self.constraints)
        except ConstraintViolationError as exc:
            self.counters["constraint_violations"] += 1
            logger.error("%s", exc)
            bound = None
            accepted = False
        else:
            accepted = self.gate(cycle, now)

            # The bound covers the offset at Sync arrival from above and at
            # DelayReq departure from below
            if o.theta_sync > bound.high or o.theta_req < bound.low:
                self.counters["bound_violations"] += 1
                logger.error(
                    "Cycle %d: true offset %d/%d outside %s",
                    cycle.seq,
                    o.theta_sync,
                    o.theta_req,
                    bound,
                )

            allowance = residual_uncertainty(cycle, self.constraints) + ceil_half(
                o.theta_req - o.theta_sync
            )
            if abs(true_offset - bound.midpoint) > allowance:
                self.counters["midpoint_violations"] += 1
                logger.error("Cycle %d: midpoint %d too far from %d", cycle.seq, bound.midpoint, true_offset)

        self.comparator(cycle)

        applied = 0
        if accepted and self.servo is not None:
            correction = servo_apply(
                self.servo, measured, self.slave_clock, now, self.engine.sync_interval
            )
            applied = correction.step

        self.sync_rows.append((now, cycle.seq, rtd, measured, true_offset, applied))
        if bound is not None:
            self.bound_rows.append(
                (now, cycle.seq, bound.low, bound.high, bound.midpoint, true_offset, int(accepted))
            )
        self.decomposition_rows.append(
            dict(true_time_ns=now, seq=cycle.seq, measured_offset_ns=measured, **decomposition._asdict())
        )

    # Run

    def run(self) -> RunResult:
        s = self.scenario
        logger.info("Running %s (seed %d, %d ns)", s.name, s.seed, self.horizon)

        executed = self.loop.run_until(self.horizon)
        logger.debug("Executed %d events", executed)

        sync = pd.DataFrame(
            self.sync_rows,
            columns=["true_time_ns", "seq", "rtd_ns", "measured_offset_ns", "true_offset_ns", "applied_correction_ns"],
        )
        bound = pd.DataFrame(
            self.bound_rows,
            columns=["true_time_ns", "seq", "low_ns", "high_ns", "midpoint_ns", "true_offset_ns", "accepted"],
        )
        observations = self.tap.frame()
        attack = self.adversary.log_frame()

        result = RunResult(
            scenario=s,
            sync=sync,
            bound=bound,
            observations=observations,
            attack=attack,
            summary={},
            oracle=self.oracle,
            cycles=self.cycles,
            decompositions=pd.DataFrame(self.decomposition_rows),
        )
        result.summary = self._summary(result)

        logger.info(
            "Finished %s: %d cycles, converged offset %s ns",
            s.name,
            len(sync),
            result.summary["converged_offset_ns"],
        )
        return result

    def _converged_offset(self, sync: pd.DataFrame) -> Optional[int]:
        if not len(sync):
            return None

        window = self.plan.window
        start, end = 0, self.horizon
        if not isinstance(self.plan, NoAttack) and window.start < self.horizon:
            start, end = window.start, min(window.end or self.horizon, self.horizon)

        tail = sync[
            (sync["true_time_ns"] >= start + 3 * (end - start) // 4)
            & (sync["true_time_ns"] <= end)
        ]
        if not len(tail):
            tail = sync.iloc[-1:]
        return int(np.median(tail["true_offset_ns"]))

    def _summary(self, result: RunResult) -> Dict[str, Any]:
        s = self.scenario
        sync = result.sync
        adversary = self.adversary

        summary = {
            "scenario": s.name,
            "seed": s.seed,
            "duration_ns": s.duration_ns,
            "cycles_completed": len(sync),
            "cycles_incomplete": self.slave.incomplete,
            "discarded_sync": self.slave.discarded["sync"],
            "discarded_followup": self.slave.discarded["followup"],
            "discarded_delayresp": self.slave.discarded["delayresp"],
            "converged_offset_ns": self._converged_offset(sync),
            "final_offset_ns": int(sync["true_offset_ns"].iloc[-1]) if len(sync) else None,
            "final_measured_offset_ns": int(sync["measured_offset_ns"].iloc[-1]) if len(sync) else None,
            "max_abs_offset_ns": int(sync["true_offset_ns"].abs().max()) if len(sync) else None,
            "attack_plan": self.plan.name,
            "adversary_mode": adversary.mode,
            "adversary_confidence": adversary.confidence,
            "adversary_armed": adversary.armed,
            "attacked_packets": adversary.n_delayed,
            "max_injected_delay_ns": adversary.max_injected,
            "max_accepted_attack_ns": self.counters["max_accepted_attack_ns"],
            "dropped_packets": self.link.n_dropped,
            "accepted_cycles": self.gate.accepted,
            "rejected_cycles": self.gate.rejected,
            "t_interval_observed_ns": self.gate.finish(self.horizon),
            "t_interval_configured_ns": self.system_params.t_interval if self.system_params else None,
            "system_bound_half_width_ns": system_bound(self.system_params, self.constraints).high
            if self.system_params
            else None,
            "suspicious_cycles": self.comparator.suspicious,
            "replay_rejections_ms": self.counters["replay_rejections_ms"],
            "replay_rejections_sm": self.counters["replay_rejections_sm"],
            "max_cover_gap_ms_ns": self.max_cover_gap[MS],
            "max_cover_gap_sm_ns": self.max_cover_gap[SM],
            "observations": len(result.observations),
        }
        for key in VIOLATION_KEYS:
            summary[key] = self.counters[key]

        replay_rejections = summary["replay_rejections_ms"] + summary["replay_rejections_sm"]
        if replay_rejections:
            logger.warning("%d packets rejected by the replay window", replay_rejections)
        if self.comparator.suspicious:
            logger.warning("%d cycles look like a selective delay attack", self.comparator.suspicious)

        summary.update(self._detector_summary(result.observations))
        return summary

    def _detector_summary(self, observations: pd.DataFrame) -> Dict[str, Any]:
        section = self.scenario.detector
        keys = ["t3", "t0", "t1", "t2", "x", "x_req", "y", "announce_period"]
        summary = {"detector_confidence": None, "detector_collisions": None}
        summary.update({"detector_" + k: None for k in keys})
        summary["detector_sequence_confidence"] = None

        if not section.enabled:
            return summary

        try:
            profile = detector.detect(observations, use_direction=section.use_direction)
        except (MotifNotFoundError, ValueError) as exc:
            logger.info("Detector found no profile: %s", exc)
        else:
            summary["detector_confidence"] = profile.confidence
            summary["detector_collisions"] = profile.collisions
            summary.update({"detector_" + k: getattr(profile, k) for k in keys})

        try:
            summary["detector_sequence_confidence"] = detector.fit_sequence_motif(observations).confidence
        except MotifNotFoundError as exc:
            logger.info("No sequence profile: %s", exc)

        return summary


def run_scenario(scenario: Scenario, out_dir=None) -> RunResult:
    """Simulate ``scenario`` and optionally write all traces to ``out_dir``."""
    result = Simulation(scenario).run()
    if out_dir is not None:
        write_result(result, out_dir)
    return result


def write_result(result: RunResult, out_dir):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    write_trace(out / "sync-trace.txt", "sync-trace", result.sync)
    write_trace(out / "bound-trace.txt", "bound-trace", result.bound)
    write_trace(out / "obs-trace.txt", "obs-trace", result.observations)
    write_trace(out / "attack-trace.txt", "attack-trace", result.attack)
    write_key_values(out / "summary.txt", result.summary, kind="summary")
    (out / "scenario.txt").write_text(result.scenario.to_text())


def check_invariants(summary: Mapping[str, Any]):
    """Raise InvariantViolationError if the summary reports any violation."""
    broken = {k: summary.get(k) for k in VIOLATION_KEYS if summary.get(k)}
    if broken:
        raise InvariantViolationError(
            "Invariant violations: "
            + ", ".join("{}={}".format(k, v) for k, v in broken.items())
        )


class IndistinguishabilityReport(NamedTuple):
    n_deltas: int
    drift_mean_abs: float
    asymmetry_mean_abs: float
    attack_mean_abs: float
    jitter_mean_abs: float
    ratio: float
    ks_statistic: Optional[float]
    ks_pvalue: Optional[float]


def indistinguishability_report(result: RunResult) -> IndistinguishabilityReport:
    """
    Compare per-cycle changes of the measured offset that stem from clock
    drift with those that stem from delay asymmetry.

    Also tests whether the measured-offset changes inside the attack window
    are distributed like those outside (two-sample Kolmogorov-Smirnov).
    """
    frame = result.decompositions
    if frame is None or len(frame) < 2:
        raise ValueError("Need at least two completed cycles")

    deltas = frame[
        ["measured_offset_ns", "drift_offset", "asymmetry_term", "attack_part", "jitter_part"]
    ].diff().iloc[1:]
    times = frame["true_time_ns"].iloc[1:]

    def mean_abs(column):
        return float(deltas[column].abs().mean())

    drift = mean_abs("drift_offset")
    asymmetry = mean_abs("asymmetry_term")
    ratio = asymmetry / drift if drift else math.inf

    window = result.scenario.attack.build().window
    inside = np.array([t in window for t in times])
    ks_statistic = ks_pvalue = None
    if not isinstance(result.scenario.attack.build(), NoAttack) and inside.sum() >= 2 and (~inside).sum() >= 2:
        test = scipy.stats.ks_2samp(
            deltas["measured_offset_ns"][inside], deltas["measured_offset_ns"][~inside]
        )
        ks_statistic, ks_pvalue = float(test.statistic), float(test.pvalue)

    return IndistinguishabilityReport(
        n_deltas=len(deltas),
        drift_mean_abs=drift,
        asymmetry_mean_abs=asymmetry,
        attack_mean_abs=mean_abs("attack_part"),
        jitter_mean_abs=mean_abs("jitter_part"),
        ratio=ratio,
        ks_statistic=ks_statistic,
        ks_pvalue=ks_pvalue,
    )


# Sweeps


def _run_point(base: Scenario, out_dir, point) -> Dict[str, Any]:
    index, overrides = point
    row = {"point": index}
    row.update(overrides)
    try:
        scenario = base.with_overrides(overrides, source="point {}".format(index))
        scenario.name = "{}-{:03d}".format(base.name, index)
        point_dir = None if out_dir is None else pathlib.Path(out_dir) / "point-{:03d}".format(index)
        result = run_scenario(scenario, point_dir)
    except Exception as exc:  # pylint: disable=broad-except
        row["error"] = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        logger.warning("Sweep point %d failed: %s", index, row["error"])
        return row

    row.update(result.summary)
    row["error"] = None
    logger.info("Sweep point %d done", index)
    return row


@ReturnOutputs
@Output("result")
class PoolCall(Node):
    """
    Apply ``fn`` to ``value`` for every record using a process pool.

    Results keep the order of the stream.
    """

    def __init__(self, fn: Callable, value, workers: int):
        super().__init__()
        self.fn = fn
        self.value = value
        self.workers = workers

    def transform_stream(self, stream):
        with closing_stream(stream):
            objs = list(stream)

        values = [self.resolve(obj, "value") for obj in objs]
        with multiprocessing.get_context().Pool(self.workers) as pool:
            for obj, result in zip(objs, pool.imap(self.fn, values)):
                yield self.emit(obj, result)


def grid_points(grid: Mapping[str, Sequence[str]]) -> List[Dict[str, str]]:
    """Cartesian product of the grid in key order."""
    if not grid or any(not values for values in grid.values()):
        raise ScenarioError("empty parameter grid")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(
    base: Scenario,
    grid: Mapping[str, Sequence[str]],
    out_dir=None,
    workers: int = 1,
    progress: bool = True,
) -> pd.DataFrame:
    """
    Run ``base`` for every grid point and collect the summaries.

    Failing points produce a row with an ``error`` message instead of
    aborting the sweep.
    """
    points = list(enumerate(grid_points(grid)))
    fn = functools.partial(_run_point, base, out_dir)

    if out_dir is not None:
        pathlib.Path(out_dir).mkdir(parents=True, exist_ok=True)

    with Pipeline() as pipeline:
        point = Unpack(points)
        if progress:
            Progress("sweep", total=len(points))
        if workers > 1:
            row = PoolCall(fn, point, workers)
        else:
            row = Call(fn, point)
        if out_dir is not None:
            TraceWriter(pathlib.Path(out_dir) / "summary-table.txt", "summary-table", row)

    rows = [obj[row] for obj in pipeline.transform_stream()]
    return pd.DataFrame(rows)
