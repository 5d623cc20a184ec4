"""
Versioned plain-text trace files.

Every trace starts with a header line ``# <kind> v1`` followed by
comma-separated rows without a column-name line. The only exception is the
sweep summary table, whose columns vary and therefore follow the header.
"""

import logging
import os
from fractions import Fraction
from typing import Collection, Dict, List, Mapping, Optional, Union

import pandas as pd

from ptpdelay.core import Node, RawOrVariable, ReturnOutputs
from ptpdelay.detector import PtpProfileEstimate

logger = logging.getLogger(__name__)

__all__ = [
    "TraceFormatError",
    "TRACE_FORMATS",
    "write_trace",
    "read_trace",
    "write_key_values",
    "read_key_values",
    "write_profile",
    "read_profile",
    "TraceWriter",
]

VERSION = 1

TRACE_FORMATS = {
    "obs-trace": ["seen_at_ns", "length_bytes", "direction"],
    "sync-trace": [
        "true_time_ns",
        "seq",
        "rtd_ns",
        "measured_offset_ns",
        "true_offset_ns",
        "applied_correction_ns",
    ],
    "bound-trace": [
        "true_time_ns",
        "seq",
        "low_ns",
        "high_ns",
        "midpoint_ns",
        "true_offset_ns",
        "accepted",
    ],
    "attack-trace": ["true_time_ns", "classified_kind", "injected_delay_ns"],
    "classified-trace": ["seen_at_ns", "length", "direction", "label"],
    # Columns are stored in the file
    "summary-table": None,
}

PathLike = Union[str, os.PathLike]


class TraceFormatError(ValueError):
    """Raised when a trace file has the wrong header or malformed rows."""


def _header(kind: str) -> str:
    return "# {} v{}".format(kind, VERSION)


def _columns(kind: str) -> Optional[List[str]]:
    try:
        return TRACE_FORMATS[kind]
    except KeyError:
        raise ValueError("Unknown trace kind {!r}".format(kind)) from None


def write_trace(path: PathLike, kind: str, frame: pd.DataFrame):
    """Write ``frame`` as a trace of the given kind."""
    columns = _columns(kind)

    with open(path, "w", newline="") as fp:
        fp.write(_header(kind) + "\n")
        if columns is None:
            frame.to_csv(fp, index=False, lineterminator="\n")
        else:
            if list(frame.columns) != columns:
                frame = frame.set_axis(columns, axis=1) if len(frame.columns) == len(columns) else frame[columns]
            frame.to_csv(fp, index=False, header=False, lineterminator="\n")

    logger.debug("Wrote %d rows to %s", len(frame), path)


def read_trace(path: PathLike, kind: str) -> pd.DataFrame:
    """Read a trace and check its header."""
    columns = _columns(kind)

    with open(path, newline="") as fp:
        header = fp.readline().rstrip("\r\n")
        if header != _header(kind):
            raise TraceFormatError(
                "{}: expected header {!r}, found {!r}".format(path, _header(kind), header)
            )
        try:
            if columns is None:
                return pd.read_csv(fp)
            return pd.read_csv(fp, header=None, names=columns)
        except pd.errors.EmptyDataError:
            return pd.DataFrame(columns=columns or [])
        except (pd.errors.ParserError, ValueError) as exc:
            raise TraceFormatError("{}: {}".format(path, exc)) from exc


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_key_values(path: PathLike, values: Mapping, kind: Optional[str] = None):
    """Write ``key=value`` lines, optionally after a ``# <kind> v1`` header."""
    with open(path, "w") as fp:
        if kind is not None:
            fp.write(_header(kind) + "\n")
        for key, value in values.items():
            fp.write("{}={}\n".format(key, _format_value(value)))


def _parse_value(text: str):
    if text == "none":
        return None
    if text in ("true", "false"):
        return text == "true"
    for convert in (int, float):
        try:
            return convert(text)
        except ValueError:
            pass
    if "/" in text:
        try:
            return Fraction(text)
        except ValueError:
            pass
    return text


def read_key_values(path: PathLike, kind: Optional[str] = None) -> Dict:
    values = {}
    with open(path) as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.strip()
            if lineno == 1 and kind is not None:
                if line != _header(kind):
                    raise TraceFormatError(
                        "{}: expected header {!r}, found {!r}".format(path, _header(kind), line)
                    )
                continue
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise TraceFormatError("{}:{}: expected key=value".format(path, lineno))
            values[key.strip()] = _parse_value(value.strip())
    return values


_PROFILE_FIELDS = [
    "t3",
    "t0",
    "t1",
    "t2",
    "x",
    "x_req",
    "y",
    "announce_period",
    "announce_phase",
    "sync_phase",
    "confidence",
    "use_direction",
    "collisions",
]


def write_profile(path: PathLike, profile: PtpProfileEstimate):
    write_key_values(
        path, {f: getattr(profile, f) for f in _PROFILE_FIELDS}, kind="ptp-profile"
    )


def read_profile(path: PathLike) -> PtpProfileEstimate:
    values = read_key_values(path, kind="ptp-profile")
    missing = set(_PROFILE_FIELDS) - set(values)
    if missing:
        raise TraceFormatError("{}: missing keys {}".format(path, sorted(missing)))
    values["confidence"] = float(values["confidence"])
    return PtpProfileEstimate(**{f: values[f] for f in _PROFILE_FIELDS})


@ReturnOutputs
class TraceWriter(Node):
    """
    Collect one row per record and write them as a trace after the stream.

    Args:
        path (str): Output file.
        kind (str): Trace kind, see :py:data:`TRACE_FORMATS`.
        data (Mapping or Variable): Row values keyed by column.
        columns (Collection, optional): Column order for variable-column
            kinds. Defaults to first-seen order.
    """

    def __init__(
        self,
        path: PathLike,
        kind: str,
        data: RawOrVariable[Mapping],
        columns: Optional[Collection] = None,
    ):
        super().__init__()
        _columns(kind)

        self.path = path
        self.kind = kind
        self.data = data
        self.columns = columns
        self.rows = []  # type: List[Mapping]

    def transform(self, data):
        self.rows.append(data)

    def after_stream(self):
        columns = TRACE_FORMATS[self.kind] or self.columns
        frame = pd.DataFrame(self.rows, columns=columns)
        write_trace(self.path, self.kind, frame)
