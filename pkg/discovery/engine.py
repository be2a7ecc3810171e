"""
The discovery loop: fit the current model to every subject, find the trials
the reference predictor explains better, ask the reviser for a better model
and repeat.

A simulation produces ``iterations + 1`` records. Record 0 is the fit of the
class baseline; records 1..iterations are fits of the revised models; only
the last record does not call the reviser.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from discovery import exceptions
from discovery.config import (
    AcceptancePolicy,
    RunConfig,
    merge_config,
    read_config_file,
    settings_defaults,
)
from discovery.data import ReferenceLikelihoods, TrialSet, load_reference, load_trials
from discovery.fitting import fit_subjects, mean_aic, reference_aics
from discovery.msl import ModelProgram, get_program, print_program, typecheck
from discovery.regret import RegretSet, compute_regret
from discovery.reviser import PromptBundle, Reviser, RevisionOutcome, build_prompt, build_reviser
from discovery.seeds import derive_seed
from discovery.serializers import RunConfigSerializer

logger = logging.getLogger(__name__)


def build_run_config(*layers, config_path=None) -> RunConfig:
    """
    Validate a RunConfig from settings defaults, an optional config file and
    any number of override layers (later layers win, ``None`` is ignored).
    """
    file_layer = read_config_file(config_path) if config_path else {}
    serializer = RunConfigSerializer(
        data=merge_config(settings_defaults(), file_layer, *layers)
    )
    if not serializer.is_valid():
        raise exceptions.ValidationError(_flatten_errors(serializer.errors))
    return serializer.save()


def _flatten_errors(errors, prefix="") -> str:
    messages = []
    for key, value in errors.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            messages.append(_flatten_errors(value, f"{name}."))
        else:
            messages.append(f"{name}: {' '.join(str(item) for item in value)}")
    return "; ".join(messages)


@dataclass(frozen=True)
class Dataset:
    trials: TrialSet
    reference: ReferenceLikelihoods

    @cached_property
    def reference_aics(self) -> tuple:
        return reference_aics(self.reference, self.trials)


def load_dataset(config: RunConfig) -> Dataset:
    trials = load_trials(config.trials_path, config.trials_format or None)
    if trials.num_features != config.num_features:
        raise exceptions.ValidationError(
            f"trials have {trials.num_features} features, the run is "
            f"configured for {config.num_features}"
        )
    dataset = Dataset(trials, load_reference(config.reference_path, trials))
    logger.info(
        "Reference predictor mean AIC %.4f over %d subjects",
        float(np.mean([value for _, value in dataset.reference_aics])),
        len(dataset.reference_aics),
    )
    return dataset


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration_index: int
    model_source: str
    fits: tuple
    mean_aic: float
    best_mean_aic: float
    regret: RegretSet
    converged: bool = False
    prompt: PromptBundle = None
    revision_outcome: RevisionOutcome = None
    installed: bool = False
    install_error: str = ""
    candidate_mean_aic: float = None
    next_model_source: str = ""
    wall_time: float = 0.0

    @property
    def regret_size(self) -> int:
        return len(self.regret)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    model_class: str
    simulation_index: int
    seed: int
    records: tuple
    reference_aics: tuple = ()

    @property
    def final_mean_aic(self) -> float:
        return self.records[-1].mean_aic

    @property
    def best_mean_aic(self) -> float:
        return min(record.mean_aic for record in self.records)

    @property
    def best_record(self) -> IterationRecord:
        return min(self.records, key=lambda record: record.mean_aic)


@dataclass
class LoopState:
    """Mutable state of one simulation: the current model and its fit cache."""

    model: ModelProgram
    dataset: Dataset
    config: RunConfig
    reviser: Reviser
    seed: int
    fit_workers: int = 1
    best_mean_aic: float = math.inf
    history: list = field(default_factory=list)
    fit_cache: dict = field(default_factory=dict)

    def fits_for(self, program: ModelProgram) -> tuple:
        key = print_program(program)
        if key not in self.fit_cache:
            typed = typecheck(program, self.config.num_features)
            self.fit_cache[key] = fit_subjects(
                typed,
                self.dataset.trials,
                seed=self.seed,
                restarts=self.config.restarts,
                workers=self.fit_workers,
            )
        return self.fit_cache[key]


def _install(state: LoopState, candidate: ModelProgram, current_aic: float) -> tuple:
    """Fit a revised model and decide whether it replaces the current one."""
    try:
        candidate_aic = mean_aic(state.fits_for(candidate))
    except (exceptions.EvalError, exceptions.OptimizerFailure,
            exceptions.LengthMismatch) as exc:
        logger.warning("Revised model cannot be fitted, keeping current: %s", exc)
        return False, str(exc), None
    if state.config.acceptance_policy is AcceptancePolicy.KEEP_BEST:
        return candidate_aic < current_aic, "", candidate_aic
    return True, "", candidate_aic


def run_iteration(state: LoopState, iteration_index: int,
                  revise: bool = True) -> IterationRecord:
    started = time.perf_counter()
    config = state.config
    dataset = state.dataset

    fits = state.fits_for(state.model)
    current_aic = mean_aic(fits)
    state.best_mean_aic = min(state.best_mean_aic, current_aic)
    regret = compute_regret(fits, dataset.reference, dataset.trials, config.threshold)

    prompt, outcome, candidate_aic = None, None, None
    installed, install_error = False, ""
    converged = not regret
    if revise:
        previous = state.history if config.reviser.multi_proposal else ()
        try:
            prompt = build_prompt(
                state.model,
                regret,
                cap=config.max_points_in_prompt,
                system_text=config.reviser.system_text,
                previous_models=previous,
            )
        except exceptions.EmptyRegretSet:
            converged = True
        else:
            outcome = state.reviser.revise(prompt)
            if outcome.accepted:
                installed, install_error, candidate_aic = _install(
                    state, outcome.program, current_aic
                )

    model_source = print_program(state.model)
    if installed:
        state.history.append(state.model)
        state.model = outcome.program

    record = IterationRecord(
        iteration_index=iteration_index,
        model_source=model_source,
        fits=fits,
        mean_aic=current_aic,
        best_mean_aic=state.best_mean_aic,
        regret=regret,
        converged=converged,
        prompt=prompt,
        revision_outcome=outcome,
        installed=installed,
        install_error=install_error,
        candidate_mean_aic=candidate_aic,
        next_model_source=print_program(state.model),
        wall_time=time.perf_counter() - started,
    )
    logger.info(
        "Iteration %d: mean AIC %.4f, regret %d, revision %s%s",
        iteration_index,
        current_aic,
        len(regret),
        outcome.status.value if outcome else "none",
        " (installed)" if installed else "",
    )
    return record


def run_simulation(config: RunConfig, model_class: str, simulation_index: int,
                   dataset: Dataset = None, reviser: Reviser = None,
                   fit_workers: int = None,
                   start_model: ModelProgram = None) -> SimulationResult:
    """
    Run ``config.iterations`` revisions starting from the ``model_class``
    baseline, or from ``start_model`` labelled ``model_class`` when given.
    Every random stream is seeded from
    ``(config.seed, model_class, simulation_index)``.
    """
    seed = derive_seed(config.seed, model_class, simulation_index)
    state = LoopState(
        model=start_model or get_program(model_class),
        dataset=dataset or load_dataset(config),
        config=config,
        reviser=reviser or build_reviser(config.reviser, config.num_features),
        seed=seed,
        fit_workers=config.workers if fit_workers is None else fit_workers,
    )
    logger.info("Simulation %s/%d started (seed %d)", model_class, simulation_index, seed)
    records = tuple(
        run_iteration(state, index, revise=index < config.iterations)
        for index in range(config.iterations + 1)
    )
    return SimulationResult(
        model_class=model_class,
        simulation_index=simulation_index,
        seed=seed,
        records=records,
        reference_aics=state.dataset.reference_aics,
    )


def run_experiment(config: RunConfig, dataset: Dataset = None,
                   reviser_factory=None) -> tuple:
    """
    Run every (model class, simulation) pair. Each simulation gets its own
    reviser from ``reviser_factory`` (default ``build_reviser``). Results
    follow ``config.model_classes`` order, then simulation index.
    """
    dataset = dataset or load_dataset(config)
    reviser_factory = reviser_factory or (
        lambda: build_reviser(config.reviser, config.num_features)
    )
    jobs = [
        (model_class, index)
        for model_class in config.model_classes
        for index in range(config.simulations_per_class)
    ]

    def run_one(job) -> SimulationResult:
        model_class, index = job
        return run_simulation(
            config,
            model_class,
            index,
            dataset=dataset,
            reviser=reviser_factory(),
            fit_workers=1 if config.workers > 1 else None,
        )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return tuple(pool.map(run_one, jobs))
    return tuple(run_one(job) for job in jobs)
