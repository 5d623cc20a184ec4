from typing import Mapping

from ptpdelay import Node, Output, ReturnOutputs
from ptpdelay.ptp import SyncCycle
from ptpdelay.scenario import Scenario
from ptpdelay.simcore import NS_PER_MS


def ms(value) -> int:
    """Milliseconds to nanoseconds."""
    return int(value * NS_PER_MS)


def cycle(t_M1, t_S2, t_S3, t_M4, seq=1, t_M5=None, t_S6=None) -> SyncCycle:
    """A complete cycle from four timestamps given in milliseconds."""
    return SyncCycle(
        seq=seq,
        t_M1=ms(t_M1),
        t_S2=ms(t_S2),
        t_S3=ms(t_S3),
        t_M4=ms(t_M4),
        t_M5=None if t_M5 is None else ms(t_M5),
        t_S6=None if t_S6 is None else ms(t_S6),
    )


def scenario(overrides: Mapping[str, object] = None, **kwargs) -> Scenario:
    """
    Build a scenario from ``section.key`` overrides.

    Keyword arguments use ``__`` instead of the dot: ``link__d_common_ns=...``.
    """
    values = dict(overrides or {})
    values.update({k.replace("__", "."): v for k, v in kwargs.items()})
    return Scenario().with_overrides({k: str(v) for k, v in values.items()})


@ReturnOutputs
@Output("value")
class Const(Node):
    def __init__(self, value):
        super().__init__()
        self.value = value

    def transform(self, value):
        return value
