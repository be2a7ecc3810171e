"""
Per-subject maximum likelihood estimation of MSL model parameters.

The objective is the total negative natural-log likelihood of the observed
choices. It is minimized with BFGS from several seeded standard-normal start
points; gradients are central finite differences since MSL has no autodiff.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from discovery import exceptions
from discovery.data import SubjectTrials, TrialSet
from discovery.msl import TypedProgram, evaluate
from discovery.seeds import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 10
GRADIENT_STEP = 1e-6
GRADIENT_TOLERANCE = 1e-6
MAX_ITERATIONS = 500


@dataclass(frozen=True)
class OptimizerMeta:
    restarts_used: int
    converged: bool
    function_evals: int


@dataclass(frozen=True, eq=False)
class FitResult:
    subject_id: str
    params_hat: tuple
    per_trial_nll: np.ndarray
    total_nll: float
    aic: float
    optimizer_meta: OptimizerMeta

    @property
    def num_parameters(self) -> int:
        return len(self.params_hat)

    @property
    def num_trials(self) -> int:
        return len(self.per_trial_nll)


def _chose_b(choices) -> np.ndarray:
    array = np.asarray(choices)
    if array.dtype == bool:
        return array
    return np.array([getattr(choice, "value", choice) == "B" for choice in choices])


def nll(probs_b, choices) -> tuple:
    """
    Per-trial and total negative log-likelihood of the observed choices.

    ``probs_b`` must already be clipped away from 0 and 1. ``choices`` is a
    boolean "chose B" array or a sequence of ``Choice``/"A"/"B" values.
    """
    probs_b = np.asarray(probs_b, dtype=float)
    chose_b = _chose_b(choices)
    if probs_b.shape != chose_b.shape:
        raise exceptions.LengthMismatch(
            f"{probs_b.size} probabilities for {chose_b.size} choices"
        )
    per_trial = -np.log(np.where(chose_b, probs_b, 1.0 - probs_b))
    return per_trial, math.fsum(per_trial)


def aic(num_parameters: int, total_nll: float) -> float:
    return 2 * num_parameters + 2 * total_nll


def mean_aic(fits) -> float:
    return float(np.mean([fit.aic for fit in fits]))


def reference_aics(reference, trials) -> tuple:
    """
    ``(subject_id, AIC)`` of the reference predictor per subject. The
    reference has no fitted parameters, so its AIC is twice its total NLL.
    """
    return tuple(
        (subject.subject_id, aic(0, math.fsum(reference.for_subject(subject))))
        for subject in trials.subjects()
    )


def central_gradient(objective, x: np.ndarray, step: float = GRADIENT_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    gradient = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        offset = np.zeros_like(x)
        offset[i] = h
        gradient[i] = (objective(x + offset) - objective(x - offset)) / (2 * h)
    return gradient


class NegativeLogLikelihood:
    """Total NLL of one subject's choices as a function of the parameters."""

    def __init__(self, typed: TypedProgram, trials: SubjectTrials):
        self.typed = typed
        self.trials = trials
        self.evaluations = 0

    def per_trial(self, params) -> np.ndarray:
        probs = evaluate(
            self.typed, params, self.trials.option_a, self.trials.option_b
        ).probs_b
        return nll(probs, self.trials.chose_b)[0]

    def __call__(self, params) -> float:
        self.evaluations += 1
        try:
            return math.fsum(self.per_trial(params))
        except exceptions.EvalError:
            return math.inf

    def gradient(self, params) -> np.ndarray:
        return central_gradient(self, params)


def _result(objective: NegativeLogLikelihood, params: np.ndarray,
            meta: OptimizerMeta) -> FitResult:
    per_trial = objective.per_trial(params)
    per_trial.setflags(write=False)
    total = math.fsum(per_trial)
    return FitResult(
        subject_id=objective.trials.subject_id,
        params_hat=tuple(float(value) for value in params),
        per_trial_nll=per_trial,
        total_nll=total,
        aic=aic(len(params), total),
        optimizer_meta=meta,
    )


def fit(typed: TypedProgram, trials: SubjectTrials, seed: int = 0,
        restarts: int = DEFAULT_RESTARTS) -> FitResult:
    """
    Best fit over ``restarts`` BFGS runs started from seeded standard-normal
    points. A start point itself counts as a candidate, so the result is
    never worse than any point tried.
    """
    if len(trials) == 0:
        raise exceptions.ValidationError(
            "cannot fit a subject without trials", key=trials.subject_id
        )
    objective = NegativeLogLikelihood(typed, trials)
    num_parameters = typed.num_parameters

    if num_parameters == 0:
        objective(np.empty(0))
        return _result(
            objective,
            np.empty(0),
            OptimizerMeta(restarts_used=0, converged=True, function_evals=1),
        )

    starts = np.random.default_rng(seed).standard_normal((restarts, num_parameters))
    best_params, best_value, converged, used = None, math.inf, False, 0
    for number, start in enumerate(starts, start=1):
        start_value = objective(start)
        if not math.isfinite(start_value):
            logger.warning(
                "Subject %s: restart %d starts at a non-finite objective, skipped",
                trials.subject_id,
                number,
            )
            continue
        used += 1
        result = minimize(
            objective,
            start,
            method="BFGS",
            jac=objective.gradient,
            options={"gtol": GRADIENT_TOLERANCE, "maxiter": MAX_ITERATIONS},
        )
        for value, params, success in (
            (float(result.fun), result.x, bool(result.success)),
            (start_value, start, False),
        ):
            if math.isfinite(value) and value < best_value:
                best_value, best_params, converged = value, np.array(params), success

    if best_params is None:
        raise exceptions.OptimizerFailure(
            f"every restart for subject {trials.subject_id} produced a "
            "non-finite objective"
        )

    fit_result = _result(
        objective,
        best_params,
        OptimizerMeta(
            restarts_used=used,
            converged=converged,
            function_evals=objective.evaluations,
        ),
    )
    logger.debug(
        "Subject %s: nll=%.4f aic=%.4f params=%s",
        fit_result.subject_id,
        fit_result.total_nll,
        fit_result.aic,
        fit_result.params_hat,
    )
    return fit_result


def fit_subjects(typed: TypedProgram, trials: TrialSet, seed: int = 0,
                 restarts: int = DEFAULT_RESTARTS, workers: int = 1) -> tuple:
    """Fit every subject; results follow the TrialSet's subject order."""
    subjects = trials.subjects()

    def fit_one(subject: SubjectTrials) -> FitResult:
        return fit(
            typed, subject, derive_seed(seed, subject.subject_id), restarts
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return tuple(pool.map(fit_one, subjects))
    return tuple(fit_one(subject) for subject in subjects)
