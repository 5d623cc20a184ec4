from fractions import Fraction

import pytest

from ptpdelay.netmodel import Direction
from ptpdelay.ptp import (
    CYCLE_KINDS,
    EngineConfig,
    IncompleteCycleError,
    Master,
    Message,
    MessageKind,
    ServoState,
    Slave,
    SyncCycle,
    compute_offset,
    compute_rtd,
    servo_apply,
)
from ptpdelay.simcore import NS_PER_MS, NS_PER_S, ClockModel
from tests.helpers import cycle, ms


@pytest.mark.parametrize(
    "timestamps,rtd,offset",
    [
        # Symmetric 2 unit path, slave 10 units ahead
        ((0, 12, 12, 4), 4, 10),
        # DelayReq path 6 units slower
        ((0, 12, 12, 10), 10, 7),
        # Sync path 6 units slower
        ((0, 18, 18, 10), 10, 13),
        ((5, 5, 5, 5), 0, 0),
    ],
)
def test_compute_rtd_offset(timestamps, rtd, offset):
    c = cycle(*timestamps)
    assert compute_rtd(c) == ms(rtd)
    assert compute_offset(c) == ms(offset)


def test_compute_offset_odd_rtd(caplog):
    c = SyncCycle(1, t_M1=0, t_S2=3, t_S3=10, t_M4=10)
    with caplog.at_level("DEBUG", logger="ptpdelay.ptp"):
        assert compute_rtd(c) == 3
        # 3 - trunc(3 / 2)
        assert compute_offset(c) == 2
    assert "is odd" in caplog.text

    # Halving truncates toward zero for a negative RTD too
    c = SyncCycle(2, t_M1=0, t_S2=-3, t_S3=10, t_M4=10)
    assert compute_rtd(c) == -3
    assert compute_offset(c) == -2


def test_incomplete_cycle():
    with pytest.raises(IncompleteCycleError):
        compute_rtd(SyncCycle(1, t_M1=0, t_S2=1))


def test_MessageKind():
    assert [k.plain_length for k in CYCLE_KINDS] == [86, 86, 96, 86]
    assert MessageKind.ANNOUNCE.plain_length == 106
    assert MessageKind.DELAY_REQ.direction is Direction.SLAVE_TO_MASTER
    assert MessageKind.SYNC.direction is Direction.MASTER_TO_SLAVE
    assert MessageKind.parse("FollowUp") is MessageKind.FOLLOW_UP
    assert MessageKind.parse("DELAY_RESP") is MessageKind.DELAY_RESP

    with pytest.raises(ValueError):
        MessageKind.parse("Signaling")


def test_EngineConfig():
    config = EngineConfig()
    assert config.sync_interval == 250 * NS_PER_MS
    assert config.first_sync == config.sync_interval

    with pytest.raises(ValueError, match="sync_interval"):
        EngineConfig(sync_interval=0)


def run_master(master, until):
    """All messages the master emits up to ``until``, with their emission times."""
    emitted = []
    while master.next_due() is not None and master.next_due() <= until:
        now = master.next_due()
        emitted.extend((now, m) for m in master.step(now))
    return emitted


def test_master_step():
    master = Master(ClockModel(offset_at_epoch=7), EngineConfig())
    emitted = run_master(master, NS_PER_S)

    kinds = [m.kind for _, m in emitted]
    # Syncs at 250, 500, 750 and 1000 ms
    assert kinds.count(MessageKind.SYNC) == 4
    assert kinds.count(MessageKind.FOLLOW_UP) == 3
    assert kinds.count(MessageKind.ANNOUNCE) == 1

    syncs = {m.seq: t for t, m in emitted if m.kind is MessageKind.SYNC}
    for t, m in emitted:
        if m.kind is MessageKind.FOLLOW_UP:
            # Carries the master-local Sync send time
            assert m.timestamp == syncs[m.seq] + 7
            assert m.timestamp == master.sent_sync_time(m.seq)
            assert t == syncs[m.seq] + 3 * NS_PER_MS


def test_master_announce_interval():
    master = Master(ClockModel(), EngineConfig())
    emitted = run_master(master, 2 * NS_PER_S)
    announces = [t for t, m in emitted if m.kind is MessageKind.ANNOUNCE]
    assert announces == [125 * NS_PER_MS]


def test_master_receive():
    master = Master(ClockModel(offset_at_epoch=100), EngineConfig(delayresp_lag=10))

    with pytest.raises(ValueError, match="DelayReq"):
        master.receive(Message(MessageKind.SYNC, 0), 5)

    due = master.receive(Message(MessageKind.DELAY_REQ, 0), 50)
    assert due == 60
    (resp,) = master.step(60)
    assert resp.kind is MessageKind.DELAY_RESP
    assert resp.timestamp == 150
    assert resp.t_M5 == 160


def test_slave_step():
    slave = Slave(ClockModel(offset_at_epoch=ms(10)), EngineConfig())

    assert slave.step(Message(MessageKind.SYNC, 0), ms(2)) == (None, None)
    step = slave.step(Message(MessageKind.FOLLOW_UP, 0, timestamp=0), ms(5))
    assert step.delay_req_at == ms(10)

    req = slave.send_delay_req(ms(2))
    assert req.kind is MessageKind.DELAY_REQ and req.seq == 0
    # Only one DelayReq per cycle
    assert slave.send_delay_req(ms(3)) is None

    step = slave.step(Message(MessageKind.DELAY_RESP, 0, timestamp=ms(4), t_M5=ms(4)), ms(6))
    c = step.cycle
    assert (c.t_M1, c.t_S2, c.t_S3, c.t_M4) == (0, ms(12), ms(12), ms(4))
    assert c.t_S6 == ms(16)
    assert compute_offset(c) == ms(10)
    assert slave.completed == 1


def test_slave_missing_delayresp():
    slave = Slave(ClockModel(), EngineConfig())
    slave.step(Message(MessageKind.SYNC, 0), 10)
    slave.step(Message(MessageKind.FOLLOW_UP, 0, timestamp=0), 20)
    slave.send_delay_req(30)

    # Next cycle proceeds, the first is abandoned
    slave.step(Message(MessageKind.SYNC, 1), 100)
    slave.step(Message(MessageKind.FOLLOW_UP, 1, timestamp=90), 110)
    assert slave.incomplete == 1
    assert slave.current.seq == 1

    # A late DelayResp for cycle 0 is stale
    assert slave.step(Message(MessageKind.DELAY_RESP, 0, timestamp=40), 120).cycle is None
    assert slave.discarded["delayresp"] == 1


def test_slave_discards_old_followup():
    slave = Slave(ClockModel(), EngineConfig())
    slave.step(Message(MessageKind.SYNC, 1), 10)
    slave.step(Message(MessageKind.FOLLOW_UP, 1, timestamp=0), 20)

    slave.step(Message(MessageKind.FOLLOW_UP, 0, timestamp=0), 30)
    assert slave.discarded["followup"] == 1

    slave.step(Message(MessageKind.SYNC, 0), 40)
    assert slave.discarded["sync"] == 1


def test_servo_identity():
    servo = ServoState(alpha=Fraction(1), step_threshold=0)
    clock = ClockModel(offset_at_epoch=ms(10))

    correction = servo_apply(servo, ms(10), clock, ms(1), ms(250))
    assert correction.step == -ms(10)
    assert correction.mode == "step"
    assert clock.local_time(ms(2)) == ms(2)


def test_servo_smoothing():
    servo = ServoState(alpha=Fraction(1, 2), step_threshold=10 ** 12)
    x = 1 << 20
    for n in range(1, 10):
        servo_apply(servo, x, ClockModel(), 0, ms(250))
        assert servo.smoothed_offset == x - (x >> n)


def test_servo_slew():
    servo = ServoState(step_threshold=ms(1))
    clock = ClockModel()
    correction = servo_apply(servo, 200_000, clock, 0, ms(250))

    assert correction == (-100_000, ms(250))
    assert correction.mode == "slew"
    assert clock.local_time(ms(125)) == ms(125) - 50_000
    assert clock.local_time(ms(250)) == ms(250) - 100_000


def test_servo_attack_onset_settles():
    servo = ServoState()
    target = 25 * NS_PER_MS
    history = []
    for k in range(12):
        servo_apply(servo, target, ClockModel(), 0, ms(250))
        history.append(servo.smoothed_offset)

    assert history == sorted(history)
    assert abs(history[9] - target) <= target // 100


def test_ServoState_validation():
    with pytest.raises(ValueError, match="alpha"):
        ServoState(alpha=Fraction(0))
