import logging
import math
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from ptpdelay.adversary import (
    Adversary,
    AsymmetricLinkDelay,
    AttackWindow,
    ClassifierHandle,
    IncrementalDelay,
    NoAttack,
    SelectiveDelay,
    decide_delay,
    incremental_schedule,
)
from ptpdelay.detector import NOISE, PtpProfileEstimate, generate_observations
from ptpdelay.netmodel import Direction, LinkProfile, Observation, Tap, frame_to_observations
from ptpdelay.ptp import MessageKind
from ptpdelay.simcore import NS_PER_S
from tests.helpers import ms

MS = Direction.MASTER_TO_SLAVE
SM = Direction.SLAVE_TO_MASTER

SYNC_OBS = Observation(ms(1000), 138, MS)
REQ_OBS = Observation(ms(1000), 138, SM)


def make_tap(frame: pd.DataFrame) -> Tap:
    tap = Tap(LinkProfile())
    tap.add_noise(frame)
    return tap


def profile():
    return PtpProfileEstimate(
        t3=ms(250),
        t0=ms(3),
        t1=ms(7),
        t2=ms(4),
        x=138,
        x_req=138,
        sync_phase=ms(10),
        confidence=1.0,
    )


def jittered_cycles(rng, n_cycles, t3=ms(250)):
    """Cycles in a fixed order but with random per-cycle timing."""
    rows = []
    for k in range(n_cycles):
        t = k * t3 + int(rng.integers(0, ms(100)))
        for kind, lag in [
            (MessageKind.SYNC, 0),
            (MessageKind.FOLLOW_UP, int(rng.integers(ms(1), ms(10)))),
            (MessageKind.DELAY_REQ, int(rng.integers(ms(2), ms(20)))),
            (MessageKind.DELAY_RESP, int(rng.integers(ms(2), ms(20)))),
        ]:
            t += lag
            rows.append((t, 138, kind.direction.value, kind.value))
    return pd.DataFrame(rows, columns=["seen_at", "length", "direction", "label"])


def test_incremental_schedule():
    assert incremental_schedule(Fraction(1), 0, 7200 * NS_PER_S) == 7_200_000
    assert incremental_schedule(Fraction(1), 0, 7200 * NS_PER_S, "offset") == 14_400_000
    assert incremental_schedule(Fraction(1, 2), ms(60), ms(60)) == 0
    assert incremental_schedule(Fraction(1, 2), 0, 3) == 0

    with pytest.raises(ValueError, match="precedes"):
        incremental_schedule(Fraction(1), ms(10), ms(5))


def test_AttackWindow():
    window = AttackWindow(ms(120), ms(480))
    assert ms(120) in window
    assert ms(480) not in window
    assert ms(119) not in window
    assert 10 ** 15 in AttackWindow(5)

    with pytest.raises(ValueError, match="precedes"):
        AttackWindow(10, 5)
    with pytest.raises(ValueError, match="non-negative"):
        AttackWindow(-1)


def test_plan_validation():
    with pytest.raises(ValueError, match="non-negative"):
        SelectiveDelay(delay=-1)
    with pytest.raises(ValueError, match="non-negative"):
        AsymmetricLinkDelay(delay=-5)
    with pytest.raises(ValueError, match="basis"):
        IncrementalDelay(basis="rate")
    with pytest.raises(ValueError, match="non-negative"):
        IncrementalDelay(ramp_ppm=-1)

    plan = SelectiveDelay(targets=[MessageKind.DELAY_REQ], delay=math.inf)
    assert plan.targets == frozenset({MessageKind.DELAY_REQ})
    assert plan.name == "SelectiveDelay"
    assert not AsymmetricLinkDelay().needs_classifier


def test_decide_delay():
    oracle = ClassifierHandle(oracle=True)
    blind = ClassifierHandle()

    assert decide_delay(SYNC_OBS, NoAttack(), oracle, ms(1000), MessageKind.SYNC) == 0

    asym = AsymmetricLinkDelay(direction=SM, delay=ms(6))
    assert decide_delay(REQ_OBS, asym, blind, ms(1000)) == ms(6)
    assert decide_delay(SYNC_OBS, asym, blind, ms(1000)) == 0

    selective = SelectiveDelay(window=AttackWindow(ms(500)), delay=ms(50))
    assert decide_delay(SYNC_OBS, selective, oracle, ms(1000), MessageKind.SYNC) == ms(50)
    assert decide_delay(SYNC_OBS, selective, oracle, ms(1000), MessageKind.FOLLOW_UP) == ms(50)
    assert decide_delay(REQ_OBS, selective, oracle, ms(1000), MessageKind.DELAY_REQ) == 0
    assert decide_delay(SYNC_OBS, selective, oracle, ms(1000), None) == 0
    # Outside the window
    assert decide_delay(SYNC_OBS, selective, oracle, ms(100), MessageKind.SYNC) == 0
    # Nothing to classify with
    assert decide_delay(SYNC_OBS, selective, blind, ms(1000), MessageKind.SYNC) == 0

    ramp = IncrementalDelay(window=AttackWindow(ms(60)), ramp_ppm=1)
    now = ms(60) + 1000 * NS_PER_S
    assert decide_delay(SYNC_OBS, ramp, oracle, now, MessageKind.SYNC) == ms(1)


def test_oracle_adversary():
    plan = SelectiveDelay(window=AttackWindow(ms(500)), delay=ms(50))
    adversary = Adversary(plan, Tap(LinkProfile()), oracle=True)

    assert adversary.decide(SYNC_OBS, ms(100), MessageKind.SYNC) == 0
    assert adversary.decide(SYNC_OBS, ms(1000), MessageKind.SYNC) == ms(50)

    assert adversary.mode == "oracle"
    assert adversary.armed
    # Rows are only logged inside the window
    assert len(adversary.log) == 1
    assert adversary.log[0].classified_kind == MessageKind.SYNC.value


def test_adversary_arms_on_timing_profile():
    frame = generate_observations(profile(), 30 * NS_PER_S, np.random.default_rng(0))
    plan = SelectiveDelay(window=AttackWindow(30 * NS_PER_S), delay=ms(50))
    adversary = Adversary(plan, make_tap(frame))

    assert not adversary.armed

    sync = Observation(ms(30010), 138, MS)
    follow_up = Observation(ms(30013), 138, MS)
    request = Observation(ms(30020), 138, SM)
    noise = Observation(ms(30100), 138, MS)

    assert adversary.decide(sync, sync.seen_at) == ms(50)
    assert adversary.mode == "timing"
    assert adversary.confidence == 1.0
    assert adversary.decide(follow_up, follow_up.seen_at) == ms(50)
    assert adversary.decide(request, request.seen_at) == 0
    assert adversary.decide(noise, noise.seen_at) == 0

    log = adversary.log_frame()
    assert list(log.columns) == ["true_time", "classified_kind", "injected_delay"]
    assert log["classified_kind"].tolist() == ["Sync", "FollowUp", "DelayReq", NOISE]
    assert adversary.n_delayed == 2
    assert adversary.max_injected == ms(50)


def test_adversary_falls_back_to_sequence_profile():
    rng = np.random.default_rng(3)
    frame = jittered_cycles(rng, 160)
    start = 30 * NS_PER_S
    before = frame[frame["seen_at"] < start]
    after = frame[frame["seen_at"] >= start]

    plan = SelectiveDelay(window=AttackWindow(start), delay=ms(50))
    adversary = Adversary(plan, make_tap(before))

    delays = [adversary.decide(obs, obs.seen_at) for obs in frame_to_observations(after)]

    assert adversary.mode == "sequence"
    expected = [
        ms(50) if label in ("Sync", "FollowUp") else 0 for label in after["label"]
    ]
    assert delays == expected


def test_adversary_not_armed(caplog):
    rng = np.random.default_rng(0)
    seen_at = np.sort(rng.integers(0, 10 * NS_PER_S, 500))
    frame = pd.DataFrame(
        {
            "seen_at": seen_at,
            "length": rng.integers(64, 1500, 500),
            "direction": np.where(rng.random(500) < 0.5, "MS", "SM"),
        }
    )
    plan = SelectiveDelay(window=AttackWindow(10 * NS_PER_S), delay=ms(50))
    adversary = Adversary(plan, make_tap(frame))

    with caplog.at_level(logging.WARNING, logger="ptpdelay.adversary"):
        assert adversary.decide(SYNC_OBS, 11 * NS_PER_S) == 0

    assert "not armed" in caplog.text
    assert not adversary.armed
    assert adversary.mode is None
    assert adversary.log[0].classified_kind == NOISE


def test_asymmetric_adversary():
    plan = AsymmetricLinkDelay(direction=MS, delay=ms(6))
    adversary = Adversary(plan, Tap(LinkProfile()))

    assert adversary.decide(SYNC_OBS, 0) == ms(6)
    assert adversary.decide(REQ_OBS, 0) == 0
    assert adversary.log_frame()["classified_kind"].tolist() == ["-", "-"]
    assert adversary.mode is None
