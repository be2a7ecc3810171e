from drf_spectacular.utils import extend_schema
from rest_framework import status
from rest_framework.decorators import action
from rest_framework.exceptions import NotFound
from rest_framework.response import Response
from rest_framework.throttling import ScopedRateThrottle, UserRateThrottle
from rest_framework.viewsets import GenericViewSet

from discovery import exceptions
from discovery.conf import asmr_settings
from discovery.data import reference_from_rows, trial_set_from_rows
from discovery.fitting import fit_subjects, mean_aic
from discovery.msl import parse, print_program, program_library, typecheck
from discovery.regret import compute_regret
from discovery.reviser import build_prompt
from discovery.serializers import (
    FitRequestSerializer,
    FitResponseSerializer,
    ProgramCheckResultSerializer,
    ProgramCheckSerializer,
    ProgramSerializer,
    PromptRequestSerializer,
    PromptResponseSerializer,
    RegretRequestSerializer,
    RegretSetSerializer,
)


def _program_data(name, program) -> dict:
    return {
        "name": name,
        "source": program.source or print_program(program),
        "num_parameters": program.num_parameters,
    }


class ProgramViewSet(GenericViewSet):
    """Packaged MSL programs and a syntax/type check for new ones."""

    lookup_value_regex = r"[A-Za-z_][A-Za-z0-9_]*"

    def get_serializer_class(self):
        """Returns the serializer class depending on the action ViewSet."""
        if self.action == "check":
            return ProgramCheckSerializer
        return ProgramSerializer

    def list(self, request):
        programs = [
            _program_data(name, program)
            for name, program in program_library().items()
        ]
        return Response(ProgramSerializer(programs, many=True).data)

    def retrieve(self, request, pk=None):
        program = program_library().get(pk)
        if program is None:
            raise NotFound(f"No packaged program named {pk!r}.")
        return Response(ProgramSerializer(_program_data(pk, program)).data)

    @extend_schema(
        request=ProgramCheckSerializer,
        responses=ProgramCheckResultSerializer,
    )
    @action(detail=False, methods=["POST"], url_path="check")
    def check(self, request):
        """Parse and typecheck a program; errors come back as 400."""
        serializer = self.get_serializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        program = parse(serializer.validated_data["source"])
        typed = typecheck(program, asmr_settings.NUM_FEATURES)
        result = {
            "num_parameters": program.num_parameters,
            "canonical_source": print_program(program),
            "binding_types": {
                name: str(binding_type)
                for name, binding_type in typed.binding_types.items()
            },
        }
        return Response(ProgramCheckResultSerializer(result).data)


class ComputationViewSet(GenericViewSet):
    """Stateless computations on inline data; throttled as one scope."""

    throttle_classes = (UserRateThrottle, ScopedRateThrottle)
    throttle_scope = "computations"

    def fit_request(self, data: dict) -> tuple:
        num_features = asmr_settings.NUM_FEATURES
        trials = trial_set_from_rows(data["trials"], num_features)
        typed = typecheck(parse(data["source"]), num_features)
        fits = fit_subjects(
            typed, trials, seed=data["seed"], restarts=data["restarts"]
        )
        return trials, fits

    def regret_request(self, data: dict) -> tuple:
        trials, fits = self.fit_request(data)
        reference = reference_from_rows(data["reference"], trials)
        regret = compute_regret(fits, reference, trials, data["threshold"])
        return trials, fits, regret

    def validated(self, request) -> dict:
        serializer = self.get_serializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        return serializer.validated_data


class FitViewSet(ComputationViewSet):
    serializer_class = FitRequestSerializer

    @extend_schema(responses=FitResponseSerializer)
    def create(self, request):
        """Fit a program to every subject of the inline trials."""
        _, fits = self.fit_request(self.validated(request))
        data = FitResponseSerializer({"mean_aic": mean_aic(fits), "fits": fits}).data
        return Response(data, status=status.HTTP_200_OK)


class RegretViewSet(ComputationViewSet):
    serializer_class = RegretRequestSerializer

    @extend_schema(responses=RegretSetSerializer)
    def create(self, request):
        """Fit a program, then list the trials the reference explains better."""
        _, _, regret = self.regret_request(self.validated(request))
        return Response(RegretSetSerializer(regret).data, status=status.HTTP_200_OK)


class PromptViewSet(ComputationViewSet):
    serializer_class = PromptRequestSerializer

    @extend_schema(responses=PromptResponseSerializer)
    def create(self, request):
        """Render the revision prompt for a program and its regret set."""
        data = self.validated(request)
        _, _, regret = self.regret_request(data)
        try:
            prompt = build_prompt(parse(data["source"]), regret, cap=data["cap"])
        except exceptions.EmptyRegretSet:
            prompt = None
        result = {
            "regret_size": len(regret),
            "converged": prompt is None,
            "prompt": prompt,
        }
        return Response(
            PromptResponseSerializer(result).data, status=status.HTTP_200_OK
        )
