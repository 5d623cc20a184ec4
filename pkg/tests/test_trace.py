from fractions import Fraction

import pandas as pd
import pytest

from ptpdelay import Pipeline
from ptpdelay.detector import PtpProfileEstimate
from ptpdelay.stream import Unpack
from ptpdelay.trace import (
    TraceFormatError,
    TraceWriter,
    read_key_values,
    read_profile,
    read_trace,
    write_key_values,
    write_profile,
    write_trace,
)
from tests.helpers import ms


def test_write_trace(tmp_path):
    path = tmp_path / "obs-trace.txt"
    frame = pd.DataFrame(
        {"seen_at": [ms(1), ms(2)], "length": [138, 154], "direction": ["MS", "SM"]}
    )
    write_trace(path, "obs-trace", frame)

    assert path.read_text() == "# obs-trace v1\n1000000,138,MS\n2000000,154,SM\n"

    read = read_trace(path, "obs-trace")
    assert list(read.columns) == ["seen_at_ns", "length_bytes", "direction"]
    assert read["length_bytes"].tolist() == [138, 154]


def test_read_trace_errors(tmp_path):
    path = tmp_path / "trace.txt"
    path.write_text("# sync-trace v2\n1,2,3,4,5,6\n")
    with pytest.raises(TraceFormatError, match="expected header"):
        read_trace(path, "sync-trace")

    with pytest.raises(ValueError, match="Unknown trace kind"):
        read_trace(path, "nonsense")

    path.write_text("# obs-trace v1\n")
    assert read_trace(path, "obs-trace").empty


def test_summary_table(tmp_path):
    path = tmp_path / "table.txt"
    write_trace(path, "summary-table", pd.DataFrame({"b": [1, 2], "a": ["x", "y"]}))

    assert path.read_text().splitlines()[:2] == ["# summary-table v1", "b,a"]
    assert read_trace(path, "summary-table")["a"].tolist() == ["x", "y"]


def test_key_values(tmp_path):
    path = tmp_path / "summary.txt"
    values = {
        "count": 3,
        "ratio": 0.25,
        "armed": False,
        "mode": None,
        "drift": Fraction(1, 3),
        "name": "exp1",
    }
    write_key_values(path, values, kind="summary")

    assert path.read_text().splitlines()[0] == "# summary v1"
    assert read_key_values(path, kind="summary") == values

    with pytest.raises(TraceFormatError, match="expected header"):
        read_key_values(path, kind="ptp-profile")

    path.write_text("a=1\nnot a pair\n")
    with pytest.raises(TraceFormatError, match=":2: expected key=value"):
        read_key_values(path)


def test_profile(tmp_path):
    path = tmp_path / "profile.txt"
    profile = PtpProfileEstimate(
        t3=ms(250),
        t0=ms(3),
        t1=ms(7),
        t2=ms(4),
        x=138,
        x_req=138,
        sync_phase=ms(10),
        confidence=0.975,
        y=154,
        announce_period=ms(2000),
        announce_phase=ms(100),
    )
    write_profile(path, profile)
    assert read_profile(path) == profile

    path.write_text("# ptp-profile v1\nt3=1\n")
    with pytest.raises(TraceFormatError, match="missing keys"):
        read_profile(path)


def test_TraceWriter(tmp_path):
    path = tmp_path / "attack-trace.txt"
    rows = [
        {"true_time_ns": 5, "classified_kind": "Sync", "injected_delay_ns": ms(50)},
        {"true_time_ns": 9, "classified_kind": "Noise", "injected_delay_ns": 0},
    ]

    with Pipeline() as p:
        row = Unpack(rows)
        TraceWriter(path, "attack-trace", row)
    p.run()

    assert path.read_text() == "# attack-trace v1\n5,Sync,50000000\n9,Noise,0\n"

    with pytest.raises(ValueError, match="Unknown trace kind"):
        with Pipeline():
            TraceWriter(path, "nonsense", {})
