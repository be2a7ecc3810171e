"""
Evaluation of typed MSL programs with numpy.

Evaluation is pure and deterministic. IEEE semantics apply inside the
expression (division by zero gives infinities); the output is rejected if
it contains NaN and is then clipped to [EPSILON, 1 - EPSILON].
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from discovery import exceptions
from discovery.msl.nodes import Binary, Call, Input, Name, Number, Param, Unary, Vector
from discovery.msl.typecheck import TypedProgram

EPSILON = 1e-5

BINARY_OPS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}

UNARY_FUNCS = {
    "logistic": expit,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
}


@dataclass(frozen=True, eq=False)
class EvalOutput:
    probs_b: np.ndarray


class Evaluator:
    def __init__(self, params: np.ndarray, option_a: np.ndarray, option_b: np.ndarray):
        self.params = params
        self.inputs = {"A": option_a, "B": option_b}
        self.env = {}

    def run(self, typed: TypedProgram):
        for binding in typed.program.bindings:
            self.env[binding.name] = self.eval(binding.expr)
        return self.eval(typed.program.body)

    def eval(self, node):
        match node:
            case Number(value=value):
                return np.float64(value)
            case Param(index=index):
                return np.float64(self.params[index])
            case Input(name=name):
                return self.inputs[name]
            case Name(ident=ident):
                return self.env[ident]
            case Vector(items=items):
                return np.array([self.eval(item) for item in items], dtype=float)
            case Unary():
                return np.negative(self.eval(node.operand))
            case Binary(op=op, left=left, right=right):
                result = BINARY_OPS[op](self.eval(left), self.eval(right))
                if op in ("<", "<=", ">", ">=", "==", "!="):
                    result = np.asarray(result, dtype=float)
                return result
            case Call(func=func, args=args):
                return self._call(func, [self.eval(arg) for arg in args])
        raise TypeError(f"not an MSL node: {node!r}")

    def _call(self, func: str, values: list):
        if func == "dot":
            left, right = values
            if np.ndim(right) == 2:
                return right @ left
            return left @ right
        if func in UNARY_FUNCS:
            return UNARY_FUNCS[func](values[0])
        if func in ("sum", "min", "max") and len(values) == 1:
            reduce = {"sum": np.sum, "min": np.min, "max": np.max}[func]
            return reduce(values[0], axis=-1)
        if func == "min":
            return np.minimum(*values)
        if func == "max":
            return np.maximum(*values)
        if func == "clip":
            return np.clip(*values)
        if func == "where":
            condition, if_true, if_false = values
            return np.where(np.asarray(condition) != 0, if_true, if_false)
        raise TypeError(f"unknown builtin {func}")


def evaluate(typed: TypedProgram, params, option_a, option_b) -> EvalOutput:
    params = np.asarray(params, dtype=float).reshape(-1)
    option_a = np.asarray(option_a, dtype=float)
    option_b = np.asarray(option_b, dtype=float)
    if params.size != typed.num_parameters:
        raise exceptions.LengthMismatch(
            f"model declares {typed.num_parameters} parameter(s), "
            f"got {params.size}"
        )
    if option_a.ndim != 2 or option_a.shape != option_b.shape:
        raise exceptions.LengthMismatch(
            f"option matrices must share one (trials, features) shape, "
            f"got {option_a.shape} and {option_b.shape}"
        )
    if option_a.shape[1] != typed.num_features:
        raise exceptions.LengthMismatch(
            f"options have {option_a.shape[1]} features, the program was "
            f"typed for {typed.num_features}"
        )

    with np.errstate(all="ignore"):
        raw = Evaluator(params, option_a, option_b).run(typed)
        raw = np.broadcast_to(np.asarray(raw, dtype=float), option_a.shape[:1])
    if np.isnan(raw).any():
        raise exceptions.EvalError(
            f"NonFinite: model output is NaN on {int(np.isnan(raw).sum())} trial(s)"
        )
    return EvalOutput(probs_b=np.clip(raw, EPSILON, 1 - EPSILON))
