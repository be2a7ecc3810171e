"""
AST of the model-specification language.

Nodes are frozen dataclasses compared structurally; source positions are
carried along for error messages but ignored by equality.
"""
from dataclasses import dataclass, field
from enum import Enum

MAX_SOURCE_LENGTH = 10_000
MAX_DEPTH = 64

INPUTS = ("A", "B")
COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")
ARITHMETIC = ("+", "-", "*", "/")

# builtin name -> accepted argument counts
BUILTINS = {
    "dot": (2,),
    "sum": (1,),
    "logistic": (1,),
    "exp": (1,),
    "log": (1,),
    "abs": (1,),
    "min": (1, 2),
    "max": (1, 2),
    "clip": (3,),
    "where": (3,),
}

RESERVED = frozenset({"params", "model", "p", *INPUTS, *BUILTINS})


class MslType(Enum):
    SCALAR = "Scalar"
    FEAT_VECTOR = "FeatVector"
    TRIAL_VECTOR = "TrialVector"
    FEAT_MATRIX = "FeatMatrix"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Node:
    def __post_init__(self):
        depth = 1 + max((child.depth for child in self.children()), default=0)
        object.__setattr__(self, "depth", depth)

    def children(self) -> tuple:
        return ()

    def where(self) -> str:
        pos = getattr(self, "pos", None)
        return f" at line {pos[0]}, column {pos[1]}" if pos else ""


@dataclass(frozen=True)
class Number(Node):
    value: float
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Param(Node):
    index: int
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Input(Node):
    name: str
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Name(Node):
    ident: str
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Vector(Node):
    items: tuple
    pos: tuple = field(default=None, compare=False, repr=False)

    def children(self) -> tuple:
        return self.items


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node
    pos: tuple = field(default=None, compare=False, repr=False)

    def children(self) -> tuple:
        return (self.operand,)


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node
    pos: tuple = field(default=None, compare=False, repr=False)

    def children(self) -> tuple:
        return (self.left, self.right)


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple
    pos: tuple = field(default=None, compare=False, repr=False)

    def children(self) -> tuple:
        return self.args


@dataclass(frozen=True)
class Binding:
    name: str
    expr: Node


@dataclass(frozen=True)
class ModelProgram:
    """
    A parsed candidate model: ``params <k>;``, optional bindings, and the
    ``model = <expr>;`` body giving P(choose B) per trial.
    """

    num_parameters: int
    bindings: tuple
    body: Node
    source: str = field(default="", compare=False, repr=False)

    def walk(self):
        """Yield every expression node (bindings first, then the body)."""
        stack = [self.body]
        stack.extend(binding.expr for binding in reversed(self.bindings))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children()))
