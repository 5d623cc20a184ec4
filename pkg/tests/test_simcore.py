from fractions import Fraction

import pytest

from ptpdelay.simcore import (
    NS_PER_MS,
    NS_PER_S,
    ClockModel,
    ClockOverflowError,
    CorrectionOrderError,
    EventLoop,
    RandomWalk,
    apply_correction,
    local_time,
    run_until,
    trunc_div,
)


@pytest.mark.parametrize(
    "num,den,expected", [(7, 2, 3), (-7, 2, -3), (7, -2, -3), (-7, -2, 3), (0, 5, 0)]
)
def test_trunc_div(num, den, expected):
    assert trunc_div(num, den) == expected


def test_local_time():
    assert local_time(ClockModel(offset_at_epoch=10), 0) == 10
    assert local_time(ClockModel(), 123_456) == 123_456

    clock = ClockModel(drift_ppm=1)
    assert local_time(clock, 7200 * NS_PER_S) == 7200 * NS_PER_S + 7 * NS_PER_MS + 200_000


def test_local_time_negative_drift_truncates_toward_zero():
    clock = ClockModel(drift_ppm=Fraction(-1, 3))
    # -1/3 ppm of 1 s is -333.33 ns
    assert clock.local_time(NS_PER_S) == NS_PER_S - 333


def test_drift_linearity():
    clock = ClockModel(offset_at_epoch=-5, drift_ppm=25)
    t1, t2 = 3 * NS_PER_S, 11 * NS_PER_S
    assert clock.local_time(t2) - clock.local_time(t1) == (t2 - t1) + (t2 - t1) * 25 // 10 ** 6


def test_constant_offset_without_drift():
    clock = ClockModel(offset_at_epoch=-42)
    assert {clock.local_time(t) - t for t in range(0, 10 ** 9, 10 ** 7)} == {-42}


def test_apply_correction():
    clock = ClockModel(offset_at_epoch=10)
    apply_correction(clock, 5, -10)
    assert clock.local_time(6) == 6
    # Earlier readings are unchanged
    assert clock.local_time(4) == 14

    with pytest.raises(CorrectionOrderError):
        clock.apply_correction(4, 1)


def test_correction_additivity():
    a = ClockModel(offset_at_epoch=10)
    a.apply_correction(5, -3).apply_correction(7, -7)

    b = ClockModel(offset_at_epoch=10)
    b.apply_correction(7, -10)

    for t in range(7, 30):
        assert a.local_time(t) == b.local_time(t)


def test_slewed_correction():
    clock = ClockModel()
    clock.apply_correction(100, -1000, slew=4000)

    assert clock.local_time(100) == 100
    assert clock.local_time(600) == 600 - 125
    assert clock.local_time(4100) == 4100 - 1000
    assert clock.local_time(5000) == 5000 - 1000
    assert clock.free_local_time(600) == 600

    # Never runs backwards while the slew is running
    readings = [clock.local_time(t) for t in range(100, 4200)]
    assert all(b >= a for a, b in zip(readings, readings[1:]))


def test_overflow():
    clock = ClockModel(offset_at_epoch=2 ** 63 - 10)
    with pytest.raises(ClockOverflowError):
        clock.local_time(100)

    with pytest.raises(ClockOverflowError):
        ClockModel(offset_at_epoch=2 ** 63)


def test_invalid_drift():
    with pytest.raises(ValueError, match="drift"):
        ClockModel(drift_ppm=1_000_000)


def test_RandomWalk():
    walk = RandomWalk(sigma_ns=100, step_ns=NS_PER_MS, seed=3)
    later = walk(50 * NS_PER_MS)
    # Query order does not change the path
    other = RandomWalk(sigma_ns=100, step_ns=NS_PER_MS, seed=3)
    assert other(10 * NS_PER_MS) == walk(10 * NS_PER_MS)
    assert other(50 * NS_PER_MS) == later

    assert walk(NS_PER_MS - 1) == 0
    # Constant between grid points
    assert walk(10 * NS_PER_MS) == walk(11 * NS_PER_MS - 1)

    clock = ClockModel(wander=walk)
    assert clock.local_time(10 * NS_PER_MS) == 10 * NS_PER_MS + walk(10 * NS_PER_MS)


def test_run_until():
    loop = EventLoop()
    assert run_until(loop, 100) == 0
    assert loop.now == 100

    log = []
    loop = EventLoop()
    loop.schedule(5, lambda: log.append("a"))
    loop.schedule(5, lambda: log.append("b"))
    loop.schedule(3, lambda: log.append("c"))
    loop.schedule(11, lambda: log.append("late"))

    assert loop.run_until(10) == 3
    assert log == ["c", "a", "b"]
    assert len(loop) == 1

    assert loop.run_until(11) == 1
    assert log[-1] == "late"


def test_EventLoop_schedule_from_action():
    loop = EventLoop()
    times = []

    def tick():
        times.append(loop.now)
        if loop.now < 40:
            loop.schedule_in(10, tick)

    loop.schedule(0, tick)
    loop.run_until(100)

    assert times == [0, 10, 20, 30, 40]

    with pytest.raises(ValueError, match="before current time"):
        loop.schedule(50, tick)
