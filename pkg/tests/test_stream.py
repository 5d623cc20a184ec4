from typing import List, Optional

import pytest
import tqdm

from ptpdelay import Pipeline
from ptpdelay.stream import Progress, Unpack


def test_Progress(monkeypatch: pytest.MonkeyPatch):
    # Monkeypatch tqdm so that we can extract tqdm instance attributes
    tqdm_instance: List[Optional[tqdm.tqdm]] = [None]
    tqdm_cls = tqdm.tqdm

    def mock_tqdm(*args, **kwargs):
        tqdm_instance[0] = tqdm_cls(*args, **kwargs)
        return tqdm_instance[0]

    monkeypatch.setattr(tqdm, "tqdm", mock_tqdm)

    with Pipeline() as pipeline:
        item = Unpack(range(10))
        Progress("sweep", total=10)

    result = [o[item] for o in pipeline.transform_stream()]

    assert result == list(range(10))
    assert tqdm_instance[0].total == 10
    assert tqdm_instance[0].n == 10


def test_Unpack():
    with Pipeline() as pipeline:
        outer = Unpack("AB")
        inner = Unpack(range(3))

    result = [(o[outer], o[inner]) for o in pipeline.transform_stream()]

    assert result == [(a, i) for a in "AB" for i in range(3)]


def test_Unpack_copies_records():
    with Pipeline() as pipeline:
        values = Unpack([[1], [2]])

    objs = list(pipeline.transform_stream())
    assert objs[0] is not objs[1]
    assert [o[values] for o in objs] == [[1], [2]]
