"""
Regret: trials the reference predictor explains better than the fitted model.

A trial is a regret point when ``model_nll - reference_nll >= threshold``.
The set is exact (no sampling, no cap); prompt-size capping happens in the
reviser.
"""
import math
from dataclasses import dataclass

from discovery import exceptions
from discovery.data import Choice, ReferenceLikelihoods, TrialSet

DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class RegretPoint:
    subject_id: str
    trial_index: int
    option_a: tuple
    option_b: tuple
    human_choice: Choice
    model_prob_of_choice: float
    model_nll: float
    reference_nll: float
    delta: float

    @property
    def reference_prob_of_choice(self) -> float:
        return math.exp(-self.reference_nll)

    @property
    def sort_key(self) -> tuple:
        return (-self.delta, self.subject_id, self.trial_index)


@dataclass(frozen=True)
class RegretSet:
    points: tuple
    threshold: float

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __bool__(self) -> bool:
        return bool(self.points)

    @property
    def keys(self) -> tuple:
        return tuple((point.subject_id, point.trial_index) for point in self.points)

    def top(self, count: int) -> tuple:
        """The ``count`` highest-delta points."""
        return self.points[:count]


def compute_regret(fits, reference: ReferenceLikelihoods, trials: TrialSet,
                   threshold: float = DEFAULT_THRESHOLD) -> RegretSet:
    """
    Compare each subject's fitted per-trial NLLs with the reference NLLs.

    ``fits`` is a mapping or sequence of FitResults, one per subject in
    ``trials``. Points are ordered by delta descending, then subject and
    trial ascending.
    """
    if not threshold > 0:
        raise exceptions.ValidationError(f"threshold must be > 0, got {threshold}")
    if not isinstance(fits, dict):
        fits = {fit.subject_id: fit for fit in fits}

    points = []
    for record in trials:
        fit = fits.get(record.subject_id)
        if fit is None or record.trial_index >= fit.num_trials:
            raise exceptions.AlignmentError(
                "no fitted likelihood for trial", offenders=[record.key]
            )
        if record.key not in reference.entries:
            raise exceptions.AlignmentError(
                "no reference likelihood for trial", offenders=[record.key]
            )
        model_nll = float(fit.per_trial_nll[record.trial_index])
        reference_nll = reference.entries[record.key]
        delta = model_nll - reference_nll
        if delta >= threshold:
            points.append(
                RegretPoint(
                    subject_id=record.subject_id,
                    trial_index=record.trial_index,
                    option_a=record.option_a,
                    option_b=record.option_b,
                    human_choice=record.choice,
                    model_prob_of_choice=math.exp(-model_nll),
                    model_nll=model_nll,
                    reference_nll=reference_nll,
                    delta=delta,
                )
            )
    points.sort(key=lambda point: point.sort_key)
    return RegretSet(points=tuple(points), threshold=threshold)
