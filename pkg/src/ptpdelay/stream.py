"""Nodes that fan collections into a record stream and report progress."""

from typing import Collection, Optional

import tqdm

from ptpdelay.core import (
    Node,
    Output,
    RawOrVariable,
    ReturnOutputs,
    Stream,
    closing_stream,
)

__all__ = ["Progress", "Unpack"]


@ReturnOutputs
class Progress(Node):
    """
    Show a dynamically updating progress bar using `tqdm`_.

    .. _tqdm: https://github.com/tqdm/tqdm

    Args:
        description (str): Description of the progress bar.
        total (int, optional): Expected number of records.
    """

    def __init__(self, description: Optional[str] = None, total: Optional[int] = None):
        super().__init__()
        self.description = description
        self.total = total

    def transform_stream(self, stream: Stream):
        with closing_stream(stream), tqdm.tqdm(
            stream, desc=self.description, total=self.total, unit="run"
        ) as progress:
            for obj in progress:
                yield obj


@ReturnOutputs
@Output("value")
class Unpack(Node):
    """
    Unpack values from a collection into the stream.

    Every incoming record is copied once per value.

    Args:
        collection (Collection or Variable): An iterable to unpack.

    Returns:
       Variable: One value from the iterable.

    Example:
        .. code-block:: python

            with Pipeline() as p:
                point = Unpack(grid_points)
                # One record per grid point
    """

    def __init__(self, collection: RawOrVariable[Collection]):
        super().__init__()
        self.collection = collection

    def transform_stream(self, stream: Stream):
        with closing_stream(stream):
            for obj in stream:
                for value in tuple(self.resolve(obj, "collection")):
                    yield self.emit(obj.copy(), value)
