"""
Errors raised by the discovery engine.

Every error is a DRF ``APIException`` so the HTTP API renders it with the
right status code, and carries an ``exit_code`` for the command line:
1 for bad input, 2 for runtime failures.
"""
from rest_framework import status
from rest_framework.exceptions import APIException


class DiscoveryError(APIException):
    status_code = status.HTTP_500_INTERNAL_SERVER_ERROR
    default_detail = "Model discovery failed."
    default_code = "discovery_error"
    exit_code = 2

    def __init__(self, detail=None, code=None):
        super().__init__(detail=detail, code=code)
        self.message = str(self.detail)

    def __str__(self) -> str:
        return self.message


class InputError(DiscoveryError):
    status_code = status.HTTP_400_BAD_REQUEST
    default_detail = "Invalid input."
    default_code = "invalid_input"
    exit_code = 1


class IoError(InputError):
    default_code = "io_error"


class SchemaError(InputError):
    default_code = "schema_error"

    def __init__(self, detail=None, row=None, column=None):
        if row is not None:
            detail = f"row {row}: {detail}"
        super().__init__(detail)
        self.row = row
        self.column = column


class ValidationError(InputError):
    default_code = "validation_error"

    def __init__(self, detail=None, key=None):
        if key is not None:
            detail = f"{detail} (at {key})"
        super().__init__(detail)
        self.key = key


class AlignmentError(InputError):
    default_code = "alignment_error"
    max_listed = 10

    def __init__(self, detail=None, offenders=()):
        offenders = list(offenders)
        listed = ", ".join(
            f"({subject}, {trial})"
            for subject, trial in offenders[: self.max_listed]
        )
        if offenders:
            more = len(offenders) - self.max_listed
            suffix = f" and {more} more" if more > 0 else ""
            detail = f"{detail}: {listed}{suffix}"
        super().__init__(detail)
        self.offenders = offenders


class MslError(InputError):
    default_code = "msl_error"
    excerpt = None


class ParseError(MslError):
    default_code = "parse_error"

    def __init__(self, detail=None, line=None, column=None, expected=()):
        self.line = line
        self.column = column
        self.expected = frozenset(expected)
        if line is not None:
            detail = f"line {line}, column {column}: {detail}"
        if self.expected:
            detail = f"{detail}; expected one of {sorted(self.expected)}"
        super().__init__(detail)


class HeaderError(MslError):
    default_code = "header_error"


class TypeCheckError(MslError):
    default_code = "type_error"

    def __init__(self, detail=None, node=None, operand_types=()):
        super().__init__(detail)
        self.node = node
        self.operand_types = tuple(operand_types)


class NoProgramFound(InputError):
    default_code = "no_program_found"


class MultiplePrograms(InputError):
    default_code = "multiple_programs"


class EvalError(DiscoveryError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY
    default_code = "non_finite"


class LengthMismatch(DiscoveryError):
    default_code = "length_mismatch"


class OptimizerFailure(DiscoveryError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY
    default_code = "optimizer_failure"


class EndpointError(DiscoveryError):
    status_code = status.HTTP_502_BAD_GATEWAY
    default_code = "endpoint_error"


class EmptyRegretSet(DiscoveryError):
    """The regret set is empty: the candidate model has converged."""

    default_detail = "Regret set is empty."
    default_code = "empty_regret_set"
