import numpy as np
import pytest

from ptpdelay.guard import (
    ConstraintViolationError,
    OffsetBound,
    OwdConstraints,
    PaddingError,
    PaddingPolicy,
    ReplayPolicy,
    ReplayWindow,
    RoundTripComparator,
    RtdGate,
    SystemBoundParams,
    TimingRandomization,
    apply_padding,
    bound_offset,
    midpoint_offset,
    randomize_timing,
    replay_check,
    residual_uncertainty,
    rtd_gate,
    system_bound,
    timing_source,
)
from ptpdelay.netmodel import IDENTITY, IPSEC_TABLE, IPSEC_TUNNEL, EncryptionScheme
from ptpdelay.ptp import CycleTiming, EngineConfig, MessageKind, compute_offset
from ptpdelay.simcore import NS_PER_MS, NS_PER_S
from tests.helpers import cycle, ms

FIG10 = OwdConstraints(ms(2), ms(6))


@pytest.mark.parametrize(
    "timestamps,constraints,bound,midpoint,residual",
    [
        # Early case of known minimum delays
        ((0, 2, 2, 14), FIG10, (-6, 0), -3, 3),
        # Late case
        ((0, 8, 8, 14), FIG10, (0, 6), 3, 3),
        # Nothing known about the minimum delays
        ((0, 7, 7, 14), OwdConstraints(), (-7, 7), 0, 7),
    ],
)
def test_bound_offset(timestamps, constraints, bound, midpoint, residual):
    c = cycle(*timestamps)
    result = bound_offset(c, constraints)

    assert (result.low, result.high) == (ms(bound[0]), ms(bound[1]))
    assert midpoint_offset(c, constraints) == ms(midpoint)
    assert residual_uncertainty(c, constraints) == ms(residual)


def test_bound_offset_perfect_knowledge():
    c = cycle(0, 12, 12, 4)
    k = OwdConstraints(ms(2), ms(2))
    assert bound_offset(c, k) == OffsetBound(ms(10), ms(10))
    assert residual_uncertainty(c, k) == 0
    # Symmetric truth: the midpoint is the measured offset
    assert midpoint_offset(c, k) == compute_offset(c)


def test_bound_offset_constraint_violation():
    with pytest.raises(ConstraintViolationError, match="below"):
        bound_offset(cycle(0, 12, 12, 4), OwdConstraints(ms(3), ms(2)))


def test_residual_uncertainty_rounds_up():
    c = cycle(0, 0, 0, 0)
    c.t_M4 = 3
    assert residual_uncertainty(c, OwdConstraints()) == 2


def test_monotone_tightening():
    c = cycle(0, 9, 10, 14)
    previous = None
    for d in range(0, 5):
        bound = bound_offset(c, OwdConstraints(ms(d), ms(d)))
        if previous is not None:
            assert previous.low <= bound.low and bound.high <= previous.high
        previous = bound


def test_OffsetBound():
    bound = OffsetBound(-3, 5)
    assert 0 in bound and -3 in bound and 5 in bound
    assert 6 not in bound
    assert bound.midpoint == 1
    assert bound.width == 8

    with pytest.raises(ValueError):
        OffsetBound(1, 0)


def test_system_bound():
    assert system_bound(SystemBoundParams(ms(14), NS_PER_S), FIG10) == OffsetBound(-ms(3), ms(3))

    bound = system_bound(SystemBoundParams(ms(8), NS_PER_S, 1), FIG10)
    assert bound == OffsetBound(-1000, 1000)

    with pytest.raises(ValueError, match="rtd_max"):
        system_bound(SystemBoundParams(ms(7), NS_PER_S), FIG10)

    with pytest.raises(ValueError, match="rho"):
        SystemBoundParams(ms(14), NS_PER_S, -1)


def test_rtd_gate():
    assert rtd_gate(cycle(0, 7, 7, 14), ms(14))
    assert not rtd_gate(cycle(0, 7, 7, 15), ms(14))


def test_RtdGate():
    gate = RtdGate(ms(14))
    assert gate(cycle(0, 7, 7, 14), now=ms(250))
    assert not gate(cycle(0, 7, 7, 64, seq=2), now=ms(500))
    assert gate(cycle(0, 7, 7, 10, seq=3), now=ms(750))

    assert (gate.accepted, gate.rejected) == (2, 1)
    assert gate.max_gap == ms(500)
    assert gate.finish(ms(2000)) == ms(1250)

    # Without a limit every cycle passes
    assert RtdGate()(cycle(0, 7, 7, 10 ** 6), now=0)


@pytest.mark.parametrize(
    "window,sequence,accepted",
    [
        (1, [1, 2, 3], [True, True, True]),
        (1, [1, 3, 2], [True, True, False]),
        (1, [1, 1], [True, False]),
        (1, [2, 5, 9], [True, True, True]),
        (4, [1, 3, 2, 2], [True, True, True, False]),
        (4, [10, 6, 7], [True, False, True]),
        (None, [3, 1, 1], [True, True, True]),
    ],
)
def test_replay_check(window, sequence, accepted):
    policy = ReplayPolicy(window)
    state = ReplayWindow(policy)
    assert [replay_check(seq, policy, state) for seq in sequence] == accepted
    assert state.rejected == accepted.count(False)


def test_replay_check_policy_mismatch():
    state = ReplayWindow(ReplayPolicy(4))
    assert replay_check(1, ReplayPolicy(4), state)

    for other in (ReplayPolicy(1), ReplayPolicy()):
        with pytest.raises(ValueError, match="window 4"):
            replay_check(2, other, state)
    assert state.highest == 1


def test_ReplayPolicy():
    assert not ReplayPolicy().enabled
    with pytest.raises(ValueError):
        ReplayPolicy(0)


def test_apply_padding():
    none = PaddingPolicy()
    for kind in MessageKind:
        assert apply_padding(kind.plain_length, none, IPSEC_TUNNEL) == IPSEC_TUNNEL.wrap(
            kind.plain_length
        )

    fixed = PaddingPolicy("fixed", 154)
    assert {apply_padding(k.plain_length, fixed, IPSEC_TUNNEL) for k in MessageKind} == {154}

    largest = PaddingPolicy("max")
    assert {apply_padding(k.plain_length, largest, IPSEC_TABLE) for k in MessageKind} == {154}
    # Longer cover packets are left alone
    assert apply_padding(500, largest, IPSEC_TUNNEL) == 554


def test_apply_padding_errors():
    with pytest.raises(PaddingError, match="below the largest"):
        apply_padding(86, PaddingPolicy("fixed", 140), IPSEC_TUNNEL)

    with pytest.raises(PaddingError, match="above the padding target"):
        apply_padding(500, PaddingPolicy("fixed", 154), IPSEC_TUNNEL)

    with pytest.raises(PaddingError, match="padding bytes"):
        apply_padding(86, PaddingPolicy("fixed", 1000), IDENTITY)

    with pytest.raises(ValueError, match="target"):
        PaddingPolicy("fixed")


def test_randomize_timing(rng):
    config = EngineConfig()
    assert randomize_timing(config, TimingRandomization(), rng) == CycleTiming(
        config.followup_lag, config.delayreq_lag, 0
    )

    zero_width = TimingRandomization((ms(3), ms(3)), (ms(5), ms(5)), (0, 0))
    assert randomize_timing(config, zero_width, rng) == (ms(3), ms(5), 0)

    wide = TimingRandomization((ms(1), ms(10)), (ms(1), ms(20)), (0, ms(100)))
    draw = timing_source(config, wide, rng)
    draws = np.array([draw() for _ in range(1000)])
    assert draws[:, 0].min() >= ms(1) and draws[:, 0].max() <= ms(10)
    assert draws[:, 1].min() >= ms(1) and draws[:, 1].max() <= ms(20)
    assert len(set(draws[:, 2])) > 900


def test_TimingRandomization_validation():
    assert not TimingRandomization().enabled

    with pytest.raises(ValueError, match="lo <= hi"):
        TimingRandomization(t0_range=(5, 1))

    with pytest.raises(ValueError, match="positive"):
        TimingRandomization(t1_range=(0, 5))

    with pytest.raises(ValueError, match="below the sync interval"):
        TimingRandomization(sync_offset_range=(0, ms(250))).validate(EngineConfig())


def test_RoundTripComparator():
    comparator = RoundTripComparator(OwdConstraints(ms(1), ms(1)))

    # Symmetric 1 ms path, DelayResp sent right away
    honest = cycle(0, 1, 6, 7, t_M5=7, t_S6=8)
    check = comparator(honest)
    assert check == (0, 0, False)

    # Sync delayed by 50 ms: only the first round trip widens
    attacked = cycle(0, 51, 56, 57, seq=2, t_M5=57, t_S6=58)
    check = comparator(attacked)
    assert check.sync_width == ms(50)
    assert check.suspicious
    assert comparator.suspicious == 1

    assert comparator(cycle(0, 1, 6, 7)) is None
