"""
Canonical MSL formatting.

``parse(print_program(p)) == p`` for every program the parser accepts;
parentheses are emitted only where precedence or left associativity needs them.
"""
from discovery.msl.nodes import (
    COMPARISONS,
    Binary,
    Call,
    Input,
    ModelProgram,
    Name,
    Number,
    Param,
    Unary,
    Vector,
)

PRECEDENCE = {
    **{op: 1 for op in COMPARISONS},
    "+": 2,
    "-": 2,
    "*": 3,
    "/": 3,
}
UNARY_PRECEDENCE = 4
ATOM_PRECEDENCE = 5


def _precedence(node) -> int:
    if isinstance(node, Binary):
        return PRECEDENCE[node.op]
    if isinstance(node, Unary):
        return UNARY_PRECEDENCE
    return ATOM_PRECEDENCE


def _wrap(text: str, needed: bool) -> str:
    return f"({text})" if needed else text


def format_expression(node) -> str:
    match node:
        case Number(value=value):
            return repr(float(value))
        case Param(index=index):
            return f"p[{index}]"
        case Input(name=name):
            return name
        case Name(ident=ident):
            return ident
        case Vector(items=items):
            return "[" + ", ".join(format_expression(item) for item in items) + "]"
        case Call(func=func, args=args):
            return f"{func}(" + ", ".join(format_expression(arg) for arg in args) + ")"
        case Unary(op=op, operand=Unary() as operand):
            return f"{op} {format_expression(operand)}"
        case Unary(op=op, operand=operand):
            needed = _precedence(operand) < UNARY_PRECEDENCE
            return op + _wrap(format_expression(operand), needed)
        case Binary(op=op, left=left, right=right):
            level = PRECEDENCE[op]
            left_needed = _precedence(left) < level or (
                level == 1 and _precedence(left) == 1
            )
            right_needed = _precedence(right) <= level
            return (
                _wrap(format_expression(left), left_needed)
                + f" {op} "
                + _wrap(format_expression(right), right_needed)
            )
    raise TypeError(f"not an MSL node: {node!r}")


def print_program(program: ModelProgram) -> str:
    lines = [f"params {program.num_parameters};"]
    lines.extend(
        f"{binding.name} = {format_expression(binding.expr)};"
        for binding in program.bindings
    )
    lines.append(f"model = {format_expression(program.body)};")
    return "\n".join(lines) + "\n"
