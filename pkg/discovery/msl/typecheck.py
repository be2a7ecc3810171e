"""
Shape typing for MSL.

Every node gets one of four types. Elementwise operators need equal types or
a Scalar operand; FeatMatrix and FeatVector only meet through ``dot``. A
model body must be a TrialVector of P(choose B).
"""
from dataclasses import dataclass
from types import MappingProxyType

from discovery import exceptions
from discovery.msl.nodes import (
    Binary,
    Call,
    Input,
    ModelProgram,
    MslType,
    Name,
    Number,
    Param,
    Unary,
    Vector,
)

SCALAR = MslType.SCALAR
FEAT_VECTOR = MslType.FEAT_VECTOR
TRIAL_VECTOR = MslType.TRIAL_VECTOR
FEAT_MATRIX = MslType.FEAT_MATRIX

# reductions over the last axis
REDUCED = {
    FEAT_MATRIX: TRIAL_VECTOR,
    FEAT_VECTOR: SCALAR,
    TRIAL_VECTOR: SCALAR,
}


@dataclass(frozen=True, eq=False)
class TypedProgram:
    program: ModelProgram
    num_features: int
    node_types: MappingProxyType
    binding_types: MappingProxyType

    @property
    def num_parameters(self) -> int:
        return self.program.num_parameters

    def type_of(self, node) -> MslType:
        return self.node_types[node]


def _fail(node, message: str, *operand_types):
    raise exceptions.TypeCheckError(
        f"{message}{node.where()}", node=node, operand_types=operand_types
    )


class TypeChecker:
    def __init__(self, num_features: int):
        self.num_features = num_features
        self.node_types = {}
        self.binding_types = {}

    def check(self, program: ModelProgram) -> TypedProgram:
        for binding in program.bindings:
            self.binding_types[binding.name] = self.infer(binding.expr)
        result = self.infer(program.body)
        if result is not TRIAL_VECTOR:
            _fail(
                program.body,
                f"the model must produce a {TRIAL_VECTOR} of probabilities, "
                f"got {result}",
                result,
            )
        return TypedProgram(
            program=program,
            num_features=self.num_features,
            node_types=MappingProxyType(self.node_types),
            binding_types=MappingProxyType(self.binding_types),
        )

    def infer(self, node) -> MslType:
        result = self._infer(node)
        self.node_types[node] = result
        return result

    def _infer(self, node) -> MslType:
        match node:
            case Number() | Param():
                return SCALAR
            case Input():
                return FEAT_MATRIX
            case Name(ident=ident):
                return self.binding_types[ident]
            case Vector(items=items):
                for item in items:
                    item_type = self.infer(item)
                    if item_type is not SCALAR:
                        _fail(
                            item,
                            f"vector entries must be {SCALAR}, got {item_type}",
                            item_type,
                        )
                if len(items) != self.num_features:
                    _fail(
                        node,
                        f"vector literal has {len(items)} entries, "
                        f"expected {self.num_features} (one per feature)",
                    )
                return FEAT_VECTOR
            case Unary(operand=operand):
                return self.infer(operand)
            case Binary(op=op, left=left, right=right):
                return self._broadcast(node, f"`{op}`", self.infer(left), self.infer(right))
            case Call(func=func, args=args):
                return self._call(node, func, [self.infer(arg) for arg in args])
        raise TypeError(f"not an MSL node: {node!r}")

    def _broadcast(self, node, what: str, *types) -> MslType:
        shaped = {t for t in types if t is not SCALAR}
        if len(shaped) > 1:
            _fail(
                node,
                f"{what} cannot combine {' and '.join(str(t) for t in types)}",
                *types,
            )
        return shaped.pop() if shaped else SCALAR

    def _call(self, node, func: str, types: list) -> MslType:
        if func == "dot":
            pair = tuple(types)
            if pair in ((FEAT_MATRIX, FEAT_VECTOR), (FEAT_VECTOR, FEAT_MATRIX)):
                return TRIAL_VECTOR
            if pair == (FEAT_VECTOR, FEAT_VECTOR):
                return SCALAR
            _fail(node, f"dot() cannot combine {types[0]} and {types[1]}", *types)
        if func in ("sum", "min", "max") and len(types) == 1:
            if types[0] not in REDUCED:
                _fail(node, f"{func}() cannot reduce a {types[0]}", *types)
            return REDUCED[types[0]]
        if func == "clip":
            if types[1] is not SCALAR or types[2] is not SCALAR:
                _fail(node, "clip() bounds must be Scalar", *types)
            return types[0]
        return self._broadcast(node, f"{func}()", *types)


def typecheck(program: ModelProgram, num_features: int = 4) -> TypedProgram:
    return TypeChecker(num_features).check(program)
