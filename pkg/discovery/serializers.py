from rest_framework import serializers

from discovery.config import (
    MODEL_CLASSES,
    AcceptancePolicy,
    ReviserConfig,
    ReviserMode,
    RunConfig,
)
from discovery.msl import MAX_SOURCE_LENGTH, print_program, program_library


class TrialRowSerializer(serializers.Serializer):
    """One trials-file row: ``subject_id,trial_index,a1..aN,b1..bN,choice``."""

    subject_id = serializers.CharField(max_length=255)
    trial_index = serializers.IntegerField(min_value=0)
    choice = serializers.ChoiceField(choices=("A", "B"))

    def __init__(self, *args, num_features=4, **kwargs):
        super().__init__(*args, **kwargs)
        for side in ("a", "b"):
            for position in range(1, num_features + 1):
                self.fields[f"{side}{position}"] = serializers.IntegerField()


class ReferenceRowSerializer(serializers.Serializer):
    subject_id = serializers.CharField(max_length=255)
    trial_index = serializers.IntegerField(min_value=0)
    nll = serializers.FloatField()


class ReviserConfigSerializer(serializers.Serializer):
    mode = serializers.ChoiceField(choices=[mode.value for mode in ReviserMode])
    endpoint_url = serializers.URLField()
    model_name = serializers.CharField()
    temperature = serializers.FloatField(min_value=0)
    top_p = serializers.FloatField(min_value=0, max_value=1)
    max_retries = serializers.IntegerField(min_value=0)
    timeout = serializers.FloatField()
    retry_backoff = serializers.FloatField(min_value=0)
    api_key_env = serializers.CharField()
    script_id = serializers.CharField(required=False, allow_blank=True, default="")
    system_text = serializers.CharField(
        required=False, allow_blank=True, default="", trim_whitespace=False
    )
    multi_proposal = serializers.BooleanField(required=False, default=False)

    def validate_timeout(self, value):
        if value <= 0:
            raise serializers.ValidationError("timeout must be > 0")
        return value

    def validate(self, attrs):
        data = super().validate(attrs)
        if data["mode"] == ReviserMode.SCRIPTED.value and not data.get("script_id"):
            raise serializers.ValidationError(
                {"script_id": "scripted mode needs a script directory"}
            )
        return data

    def create(self, validated_data):
        return ReviserConfig(
            **{**validated_data, "mode": ReviserMode(validated_data["mode"])}
        )


class RunConfigSerializer(serializers.Serializer):
    trials_path = serializers.CharField()
    reference_path = serializers.CharField()
    output_dir = serializers.CharField()
    trials_format = serializers.ChoiceField(
        choices=("", "csv", "json"), required=False, default=""
    )
    iterations = serializers.IntegerField(min_value=1)
    simulations_per_class = serializers.IntegerField(min_value=1)
    threshold = serializers.FloatField()
    acceptance_policy = serializers.ChoiceField(
        choices=[policy.value for policy in AcceptancePolicy]
    )
    seed = serializers.IntegerField(min_value=0)
    max_points_in_prompt = serializers.IntegerField(min_value=1)
    restarts = serializers.IntegerField(min_value=1)
    workers = serializers.IntegerField(min_value=1)
    num_features = serializers.IntegerField(min_value=1)
    model_classes = serializers.ListField(
        child=serializers.CharField(),
        allow_empty=False,
        required=False,
        default=list(MODEL_CLASSES),
    )
    log_regret_points = serializers.BooleanField(required=False, default=False)
    reviser = ReviserConfigSerializer()

    def validate_threshold(self, value):
        if not value > 0:
            raise serializers.ValidationError("threshold must be > 0")
        return value

    def validate_model_classes(self, value):
        unknown = sorted(set(value) - set(program_library()))
        if unknown:
            raise serializers.ValidationError(
                f"unknown model classes: {', '.join(unknown)}"
            )
        return value

    def create(self, validated_data):
        reviser = ReviserConfigSerializer().create(validated_data.pop("reviser"))
        return RunConfig(
            **{
                **validated_data,
                "reviser": reviser,
                "acceptance_policy": AcceptancePolicy(
                    validated_data["acceptance_policy"]
                ),
                "model_classes": tuple(validated_data["model_classes"]),
            }
        )


class OptimizerMetaSerializer(serializers.Serializer):
    restarts_used = serializers.IntegerField()
    converged = serializers.BooleanField()
    function_evals = serializers.IntegerField()


class FitResultSerializer(serializers.Serializer):
    subject_id = serializers.CharField()
    params_hat = serializers.ListField(child=serializers.FloatField())
    total_nll = serializers.FloatField()
    aic = serializers.FloatField()
    optimizer_meta = OptimizerMetaSerializer()


class FitResultDetailSerializer(FitResultSerializer):
    per_trial_nll = serializers.ListField(child=serializers.FloatField())


class RegretPointSerializer(serializers.Serializer):
    subject_id = serializers.CharField()
    trial_index = serializers.IntegerField()
    option_a = serializers.ListField(child=serializers.IntegerField())
    option_b = serializers.ListField(child=serializers.IntegerField())
    human_choice = serializers.CharField(source="human_choice.value")
    model_prob_of_choice = serializers.FloatField()
    model_nll = serializers.FloatField()
    reference_nll = serializers.FloatField()
    delta = serializers.FloatField()


class RegretSetSerializer(serializers.Serializer):
    threshold = serializers.FloatField()
    size = serializers.IntegerField(source="__len__")
    points = RegretPointSerializer(many=True)


class PromptBundleSerializer(serializers.Serializer):
    system_text = serializers.CharField()
    user_text = serializers.CharField()
    rendered_points = serializers.IntegerField()


class RevisionOutcomeSerializer(serializers.Serializer):
    status = serializers.CharField(source="status.value")
    attempts = serializers.IntegerField()
    raw_response = serializers.CharField()
    raw_responses = serializers.ListField(child=serializers.CharField())
    error = serializers.CharField()
    program_source = serializers.SerializerMethodField()

    def get_program_source(self, outcome) -> str:
        return print_program(outcome.program) if outcome.program else None


class IterationRecordSerializer(serializers.Serializer):
    """Schema of one run-log line (minus the simulation coordinates)."""

    iteration = serializers.IntegerField(source="iteration_index")
    model_source = serializers.CharField()
    mean_aic = serializers.FloatField()
    best_mean_aic = serializers.FloatField()
    regret_size = serializers.IntegerField()
    converged = serializers.BooleanField()
    fits = FitResultSerializer(many=True)
    prompt = PromptBundleSerializer(allow_null=True)
    revision = RevisionOutcomeSerializer(source="revision_outcome", allow_null=True)
    installed = serializers.BooleanField()
    install_error = serializers.CharField()
    candidate_mean_aic = serializers.FloatField(allow_null=True)
    next_model_source = serializers.CharField()


class ProgramSerializer(serializers.Serializer):
    name = serializers.CharField()
    source = serializers.CharField()
    num_parameters = serializers.IntegerField()


class ProgramCheckSerializer(serializers.Serializer):
    source = serializers.CharField(
        max_length=MAX_SOURCE_LENGTH, trim_whitespace=False
    )


class ProgramCheckResultSerializer(serializers.Serializer):
    num_parameters = serializers.IntegerField()
    canonical_source = serializers.CharField()
    binding_types = serializers.DictField(child=serializers.CharField())


class FitRequestSerializer(ProgramCheckSerializer):
    trials = TrialRowSerializer(many=True, allow_empty=False)
    seed = serializers.IntegerField(min_value=0, default=0)
    restarts = serializers.IntegerField(min_value=1, max_value=50, default=10)


class FitResponseSerializer(serializers.Serializer):
    mean_aic = serializers.FloatField()
    fits = FitResultDetailSerializer(many=True)


class RegretRequestSerializer(FitRequestSerializer):
    reference = ReferenceRowSerializer(many=True, allow_empty=False)
    threshold = serializers.FloatField(default=0.05)

    def validate_threshold(self, value):
        if not value > 0:
            raise serializers.ValidationError("threshold must be > 0")
        return value


class PromptRequestSerializer(RegretRequestSerializer):
    cap = serializers.IntegerField(min_value=1, default=200)


class PromptResponseSerializer(serializers.Serializer):
    regret_size = serializers.IntegerField()
    converged = serializers.BooleanField()
    prompt = PromptBundleSerializer(allow_null=True)
