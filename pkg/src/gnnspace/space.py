"""GNN designs, their canonical ids, and design spaces (full, condensed, custom)."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from gnnspace.errors import DesignParseError, ParameterError

ACTIVATIONS = ("relu", "prelu", "swish")
AGGREGATIONS = ("mean", "max", "sum")
CONNECTIVITY = ("stack", "skip_sum", "skip_cat")
OPTIMIZERS = ("sgd", "adam")
ATTENTION = ("none", "additive", "multiplicative")


@dataclass(frozen=True)
class Design:
    """One assignment to every design dimension.

    ``dropout == 0.0`` means dropout is off. ``extras`` carries values of
    user-registered dimensions as sorted ``(name, value)`` string pairs; the
    model builder ignores them.
    """

    bn: bool = True
    dropout: float = 0.0
    act: str = "prelu"
    agg: str = "sum"
    connectivity: str = "stack"
    pre_mp: int = 1
    mp: int = 3
    post_mp: int = 1
    batch_size: int = 32
    lr: float = 0.01
    optimizer: str = "adam"
    epochs: int = 400
    attention: str = "none"
    extras: tuple = field(default=())

    @property
    def id(self):
        return design_id(self)

    def with_choice(self, name, value):
        if name in CORE_FIELDS:
            return replace(self, **{name: parse_token(name, value)})
        extras = dict(self.extras)
        extras[name] = str(value)
        return replace(self, extras=tuple(sorted(extras.items())))

    def get(self, name):
        if name in CORE_FIELDS:
            return getattr(self, name)
        return dict(self.extras)[name]


CORE_FIELDS = tuple(f.name for f in fields(Design) if f.name != "extras")

# budget reference: 1 pre-MP, 3 MP (stacked), 1 post-MP layer with BN and PReLU
REFERENCE_DESIGN = Design()
REFERENCE_HIDDEN = 256

_ENUMS = {
    "act": ACTIVATIONS,
    "agg": AGGREGATIONS,
    "connectivity": CONNECTIVITY,
    "optimizer": OPTIMIZERS,
    "attention": ATTENTION,
}
_INTS = ("pre_mp", "mp", "post_mp", "batch_size", "epochs")


def format_token(name, value):
    if name == "bn":
        return "true" if value else "false"
    if name == "dropout":
        return "off" if float(value) == 0.0 else np.format_float_positional(float(value), trim="-")
    if name == "lr":
        return np.format_float_positional(float(value), trim="-")
    return str(value)


def parse_token(name, token):
    """Coerce a token (string or JSON value) to the typed value of dimension ``name``."""
    raw = token
    token = format_token(name, token) if not isinstance(token, str) else token
    try:
        if name == "bn":
            if token not in ("true", "false"):
                raise ValueError
            return token == "true"
        if name == "dropout":
            value = 0.0 if token in ("off", "false") else float(token)
            if not 0.0 <= value < 1.0:
                raise ValueError
            return value
        if name == "lr":
            value = float(token)
            if not value > 0:
                raise ValueError
            return value
        if name in _INTS:
            value = int(token)
            if value < 1:
                raise ValueError
            return value
        if name in _ENUMS:
            if token not in _ENUMS[name]:
                raise ValueError
            return token
    except ValueError:
        raise DesignParseError(f"unknown token {raw!r} for dimension {name!r}") from None
    raise DesignParseError(f"unknown dimension {name!r}")


def design_id(design):
    """Core values in fixed order joined by '-', then ``name=value`` extras."""
    parts = [format_token(n, getattr(design, n)) for n in CORE_FIELDS]
    parts += [f"{k}={v}" for k, v in design.extras]
    return "-".join(parts)


def parse_design_id(text):
    tokens = text.split("-")
    if len(tokens) < len(CORE_FIELDS):
        raise DesignParseError(
            f"design id {text!r} has {len(tokens)} tokens, expected at least {len(CORE_FIELDS)}")
    values = {n: parse_token(n, t) for n, t in zip(CORE_FIELDS, tokens)}
    extras = []
    for tok in tokens[len(CORE_FIELDS):]:
        if "=" not in tok:
            raise DesignParseError(f"unknown token {tok!r} after the core dimensions")
        k, v = tok.split("=", 1)
        extras.append((k, v))
    return Design(**values, extras=tuple(sorted(extras)))


@dataclass(frozen=True)
class SpaceSpec:
    """Ordered dimensions, each ``(name, choices)``; the space is their Cartesian product.

    Dimensions not listed keep the value of ``base``.
    """

    dimensions: tuple
    base: Design = REFERENCE_DESIGN

    def __post_init__(self):
        names = [n for n, _ in self.dimensions]
        if len(set(names)) != len(names):
            raise ParameterError(f"duplicate dimension names in {names}")
        for name, choices in self.dimensions:
            if not choices:
                raise ParameterError(f"dimension {name!r} has no choices")

    @property
    def names(self):
        return [n for n, _ in self.dimensions]

    @property
    def cardinality(self):
        return math.prod(len(c) for _, c in self.dimensions)

    def choices(self, name):
        for n, c in self.dimensions:
            if n == name:
                return c
        raise ParameterError(f"unknown dimension {name!r}; known: {self.names}")

    def make(self, assignment):
        d = self.base
        for name, value in assignment.items():
            d = d.with_choice(name, value)
        return d

    def __iter__(self):
        names = self.names
        for combo in itertools.product(*(c for _, c in self.dimensions)):
            yield self.make(dict(zip(names, combo)))

    def __contains__(self, design):
        return all(design.get(n) in c for n, c in self.dimensions)

    def sample(self, n, seed=0):
        """``n`` i.i.d. uniform designs (duplicates allowed), reproducible by seed."""
        if n < 1:
            raise ParameterError("sample size must be >= 1")
        rng = np.random.default_rng(seed)
        picks = [rng.integers(0, len(c), size=n) for _, c in self.dimensions]
        names = self.names
        return [self.make({nm: self.dimensions[j][1][picks[j][i]] for j, nm in enumerate(names)})
                for i in range(n)]

    def with_dimension(self, name, choices):
        """Register (or replace) a dimension; core dimensions have their choices type-checked."""
        choices = tuple(parse_token(name, c) if name in CORE_FIELDS else str(c) for c in choices)
        dims = [(n, c) for n, c in self.dimensions if n != name]
        if len(dims) == len(self.dimensions):
            dims.append((name, choices))
        else:
            dims = [(n, choices if n == name else c) for n, c in self.dimensions]
        return SpaceSpec(tuple(dims), self.base)

    def to_descriptor(self):
        return {n: [_json_value(n, v) for v in c] for n, c in self.dimensions}

    def to_json(self):
        return json.dumps(self.to_descriptor(), indent=2)

    @classmethod
    def from_descriptor(cls, obj, base=REFERENCE_DESIGN):
        space = cls((), base)
        for name, choices in obj.items():
            space = space.with_dimension(name, choices)
        return space


def _json_value(name, v):
    if name == "dropout" and v == 0.0:
        return "off"
    return v


def full_space(attention=False):
    dims = (
        ("bn", (True, False)),
        ("dropout", (0.0, 0.3, 0.6)),
        ("act", ACTIVATIONS),
        ("agg", AGGREGATIONS),
        ("connectivity", CONNECTIVITY),
        ("pre_mp", (1, 2, 3)),
        ("mp", (2, 4, 6, 8)),
        ("post_mp", (1, 2, 3)),
        ("batch_size", (16, 32, 64)),
        ("lr", (0.1, 0.01, 0.001)),
        ("optimizer", OPTIMIZERS),
        ("epochs", (100, 200, 400)),
    )
    if attention:
        dims += (("attention", ATTENTION),)
    return SpaceSpec(dims)


def condensed_space():
    """The 96-design space: seven dimensions pinned, five varied."""
    return SpaceSpec((
        ("bn", (True,)),
        ("dropout", (0.0,)),
        ("act", ("prelu",)),
        ("agg", AGGREGATIONS),
        ("connectivity", ("skip_sum", "skip_cat")),
        ("pre_mp", (1, 2)),
        ("mp", (2, 4, 6, 8)),
        ("post_mp", (2, 3)),
        ("batch_size", (32,)),
        ("lr", (0.01,)),
        ("optimizer", ("adam",)),
        ("epochs", (400,)),
    ))


def get_space(name, attention=False):
    if name == "full":
        return full_space(attention)
    if name == "condensed":
        space = condensed_space()
        return space.with_dimension("attention", ATTENTION) if attention else space
    raise ParameterError(f"unknown space {name!r}; expected 'full' or 'condensed'")


def experiment_space_size(space, num_tasks):
    return space.cardinality * num_tasks
