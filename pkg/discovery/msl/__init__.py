"""
The model-specification language (MSL): a loop-free, side-effect-free
expression language for candidate choice models.
"""
from discovery.msl.baselines import BASELINE_NAMES, baselines, get_program, program_library
from discovery.msl.evaluator import EPSILON, EvalOutput, evaluate
from discovery.msl.nodes import MAX_SOURCE_LENGTH, ModelProgram, MslType
from discovery.msl.parser import parse
from discovery.msl.printer import format_expression, print_program
from discovery.msl.typecheck import TypedProgram, typecheck

__all__ = [
    "BASELINE_NAMES",
    "EPSILON",
    "MAX_SOURCE_LENGTH",
    "EvalOutput",
    "ModelProgram",
    "MslType",
    "TypedProgram",
    "baselines",
    "evaluate",
    "format_expression",
    "get_program",
    "parse",
    "print_program",
    "program_library",
    "typecheck",
]
