"""
Record streams.

Nodes created inside a ``with Pipeline()`` block form a chain. Each node
reads values from the records flowing past and adds its results under
the :py:class:`Variable` handles it returned when it was created.
"""

import inspect
from contextlib import contextmanager
from functools import wraps
from typing import Any, Callable, Generic, Iterator, List, Optional, Tuple, TypeVar, Union

__all__ = [
    "EmptyPipelineStackError",
    "RecordKeyError",
    "Variable",
    "Record",
    "Stream",
    "RawOrVariable",
    "Node",
    "Output",
    "ReturnOutputs",
    "Call",
    "Pipeline",
    "closing_stream",
]

T = TypeVar("T")

_active = []  # type: List[Pipeline]


class EmptyPipelineStackError(RuntimeError):
    """A node was created outside of a ``with Pipeline()`` block."""


class RecordKeyError(KeyError):
    def __str__(self):
        return "{} was not produced upstream of this node".format(super().__str__())


class Variable(Generic[T]):
    """Handle of one output of one node. Usable as a :py:class:`Record` key."""

    __slots__ = ["name", "node", "_key"]

    def __init__(self, name: str, node: "Node"):
        self.name = name
        self.node = node
        self._key = (id(node), name)

    def __hash__(self):
        return hash(self._key)

    def __eq__(self, other):
        return isinstance(other, Variable) and other._key == self._key

    def __repr__(self):
        return "<Variable {}.{}>".format(self.node, self.name)

    def __getitem__(self, key) -> "Variable":
        return Call(lambda value, k: value[k], self, key)

    def __getattr__(self, name) -> "Variable":
        if name.startswith("__"):
            raise AttributeError(name)
        return Call(getattr, self, name)


RawOrVariable = Union[T, Variable[T]]


class Record(dict):
    """One item of a stream, mapping Variables to values."""

    def __missing__(self, key):
        raise RecordKeyError(key)

    def copy(self) -> "Record":
        return Record(self)


Stream = Iterator[Record]


@contextmanager
def closing_stream(stream):
    """Close ``stream`` on exit if it is a generator."""
    try:
        yield stream
    finally:
        close = getattr(stream, "close", None)
        if close is not None:
            close()


def _resolve(record: Record, value):
    if isinstance(value, Variable):
        return record[value]
    if type(value) in (tuple, list):
        return type(value)(_resolve(record, v) for v in value)
    if isinstance(value, dict):
        return {k: _resolve(record, v) for k, v in value.items()}
    return value


class Node:
    """
    Base class of the pipeline nodes.

    Subclasses either implement ``transform``, whose parameter names are
    attributes of the node holding raw values or Variables, or override
    :py:meth:`transform_stream`.
    """

    outputs = ()  # type: Tuple[str, ...]

    def __init__(self):
        if not _active:
            raise EmptyPipelineStackError(
                "{} must be created inside a Pipeline".format(type(self).__name__)
            )
        self.variables = [Variable(name, self) for name in type(self).outputs]
        _active[-1].add(self)

    def __call__(self) -> Union[None, Variable, List[Variable]]:
        if not self.variables:
            return None
        if len(self.variables) == 1:
            return self.variables[0]
        return self.variables

    def resolve(self, record: Record, name: str):
        """Value of the attribute ``name`` for ``record``."""
        return _resolve(record, getattr(self, name))

    def emit(self, record: Record, result) -> Record:
        """Store ``result`` under this node's Variables."""
        if len(self.variables) > 1:
            if len(result) != len(self.variables):
                raise ValueError(
                    "{} returned {} values for {} outputs".format(
                        self, len(result), len(self.variables)
                    )
                )
            record.update(zip(self.variables, result))
        elif self.variables:
            record[self.variables[0]] = result
        elif result is not None:
            raise ValueError("{} has no outputs but returned a value".format(self))
        return record

    def transform_stream(self, stream: Stream) -> Stream:
        names = [
            p.name
            for p in inspect.signature(self.transform).parameters.values()  # pylint: disable=no-member
            if p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]
        with closing_stream(stream):
            for record in stream:
                args = [self.resolve(record, n) for n in names]
                yield self.emit(record, self.transform(*args))  # pylint: disable=no-member
        self.after_stream()

    def after_stream(self):
        """Called once the stream is exhausted."""

    def __str__(self):
        return "{}()".format(type(self).__name__)


def Output(name: str):
    """Class decorator declaring an output of a :py:class:`Node`. Outputs are listed top-down."""

    def decorate(cls):
        if not issubclass(cls, Node):
            raise ValueError("@Output applies to Node subclasses only")
        cls.outputs = (name,) + tuple(cls.__dict__.get("outputs", ()))
        return cls

    return decorate


def ReturnOutputs(node_cls):
    """Make calling the class return the node's Variables instead of the node."""
    if not issubclass(node_cls, Node):
        raise ValueError("@ReturnOutputs applies to Node subclasses only")

    @wraps(node_cls)
    def create(*args, **kwargs):
        return node_cls(*args, **kwargs)()

    create.node_class = node_cls
    return create


@ReturnOutputs
@Output("result")
class Call(Node):
    """
    Apply ``fn`` to the resolved arguments for every record.

    Variables are resolved inside tuples, lists and dicts as well.
    """

    def __init__(self, fn: Callable, *args, **kwargs):
        super().__init__()
        self.fn = fn
        self.args = args
        self.kwargs = kwargs

    def transform(self, fn, args, kwargs):
        return fn(*args, **kwargs)

    def __str__(self):
        return "Call({})".format(getattr(self.fn, "__name__", type(self.fn).__name__))


class Pipeline:
    """
    Chain of nodes, filled inside a ``with`` block.

    A pipeline opened inside another one becomes a step of the outer one.

    Example:
        .. code-block:: python

            with Pipeline() as pipeline:
                point = Unpack(points)
                summary = Call(run_point, point)

            results = [record[summary] for record in pipeline.transform_stream()]
    """

    def __init__(self):
        self.children = []  # type: List[Any]
        if _active:
            _active[-1].add(self)

    def __enter__(self):
        _active.append(self)
        return self

    def __exit__(self, *_):
        _active.pop()

    def add(self, child):
        self.children.append(child)

    def transform_stream(self, stream: Optional[Stream] = None) -> Stream:
        """Pass ``stream`` (one empty record by default) through all children."""
        if stream is None:
            stream = iter([Record()])
        for child in self.children:
            stream = child.transform_stream(stream)
        return stream

    def run(self):
        """Exhaust the stream, discarding the records."""
        for _ in self.transform_stream():
            pass

    def locals(self) -> Tuple[Variable, ...]:
        """Variables created in this pipeline and the pipelines nested in it."""
        found = []  # type: List[Variable]
        for child in self.children:
            if isinstance(child, Pipeline):
                found.extend(child.locals())
            else:
                found.extend(child.variables)
        return tuple(found)

    def __str__(self):
        return "Pipeline([{}])".format(", ".join(map(str, self.children)))
