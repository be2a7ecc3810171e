"""
Synthetic participants drawn from a known ground-truth model, with the
oracle reference likelihoods that go with them.

The default ground truth is the packaged ``adaptive`` program at
``true_params = (1.5, 3.0)``; those values are fixture choices, not estimates
from any real experiment. Option pairs are drawn uniformly over
``{0,1}^F x {0,1}^F``.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from discovery import exceptions
from discovery.data import (
    NUM_FEATURES,
    Choice,
    ReferenceLikelihoods,
    TrialRecord,
    TrialSet,
    write_reference,
    write_trials,
)
from discovery.fitting import nll
from discovery.msl import ModelProgram, evaluate, get_program, typecheck

logger = logging.getLogger(__name__)

DEFAULT_TRUE_MODEL = "adaptive"
DEFAULT_TRUE_PARAMS = (1.5, 3.0)
DEFAULT_TRIALS_PER_SUBJECT = 96


@dataclass(frozen=True)
class GeneratorSpec:
    true_model: ModelProgram
    true_params: tuple
    num_subjects: int
    trials_per_subject: int = DEFAULT_TRIALS_PER_SUBJECT
    seed: int = 0
    exclude_identical_options: bool = True
    num_features: int = NUM_FEATURES

    def __post_init__(self):
        object.__setattr__(
            self, "true_params", tuple(float(value) for value in self.true_params)
        )
        if len(self.true_params) != self.true_model.num_parameters:
            raise exceptions.ValidationError(
                f"true model declares {self.true_model.num_parameters} "
                f"parameter(s), got {len(self.true_params)}"
            )
        if self.num_subjects < 1:
            raise exceptions.ValidationError("num_subjects must be >= 1")
        if self.trials_per_subject < 1:
            raise exceptions.ValidationError("trials_per_subject must be >= 1")

    @classmethod
    def default(cls, num_subjects: int = 30, seed: int = 0, **kwargs) -> "GeneratorSpec":
        return cls(
            true_model=get_program(DEFAULT_TRUE_MODEL),
            true_params=DEFAULT_TRUE_PARAMS,
            num_subjects=num_subjects,
            seed=seed,
            **kwargs,
        )


def subject_name(index: int) -> str:
    return f"s{index + 1:03d}"


def sample_options(rng: np.random.Generator, trials: int, num_features: int,
                   exclude_identical: bool = True) -> tuple:
    """Uniform binary option matrices; identical pairs are redrawn if excluded."""
    option_a = rng.integers(0, 2, size=(trials, num_features))
    option_b = rng.integers(0, 2, size=(trials, num_features))
    if exclude_identical:
        same = (option_a == option_b).all(axis=1)
        while same.any():
            count = int(same.sum())
            option_a[same] = rng.integers(0, 2, size=(count, num_features))
            option_b[same] = rng.integers(0, 2, size=(count, num_features))
            same = (option_a == option_b).all(axis=1)
    return option_a, option_b


def generate(spec: GeneratorSpec) -> tuple:
    """
    Sample ``num_subjects`` participants and return ``(TrialSet,
    ReferenceLikelihoods)``. The reference NLLs are those of the true model
    at the true parameters on the sampled choices.
    """
    typed = typecheck(spec.true_model, spec.num_features)
    rng = np.random.default_rng(spec.seed)
    records, entries = [], {}

    for index in range(spec.num_subjects):
        subject_id = subject_name(index)
        option_a, option_b = sample_options(
            rng,
            spec.trials_per_subject,
            spec.num_features,
            spec.exclude_identical_options,
        )
        probs_b = evaluate(typed, spec.true_params, option_a, option_b).probs_b
        chose_b = rng.random(spec.trials_per_subject) < probs_b
        per_trial, _ = nll(probs_b, chose_b)
        for trial_index in range(spec.trials_per_subject):
            records.append(
                TrialRecord(
                    subject_id=subject_id,
                    trial_index=trial_index,
                    option_a=tuple(int(v) for v in option_a[trial_index]),
                    option_b=tuple(int(v) for v in option_b[trial_index]),
                    choice=Choice.B if chose_b[trial_index] else Choice.A,
                )
            )
            entries[(subject_id, trial_index)] = float(per_trial[trial_index])

    logger.info(
        "Generated %d subjects x %d trials (seed %d)",
        spec.num_subjects,
        spec.trials_per_subject,
        spec.seed,
    )
    return TrialSet(records, spec.num_features), ReferenceLikelihoods(entries)


def generate_files(spec: GeneratorSpec, out_dir, format: str = "csv") -> tuple:
    """Generate and write ``trials.<format>`` and ``reference.csv``."""
    out_dir = Path(out_dir)
    trials, reference = generate(spec)
    trials_path = write_trials(trials, out_dir / f"trials.{format}", format)
    reference_path = write_reference(reference, out_dir / "reference.csv")
    return trials_path, reference_path
