"""
Experiment reports.

Every report is aggregated from per-iteration summary rows, so a finished
experiment and a re-read run log produce the same files. Output directory
layout::

    run_log.jsonl       config header line (with reference AICs), then one line per iteration
    summary.csv         model_class,simulation,iteration,mean_aic,min_aic,max_aic,regret_size
    participants.csv    subject_id,first_aic,last_aic
    bands.csv           scope,aggregation,iteration,mean_aic,min_aic,max_aic,count
    report.json         best model and final-iteration aggregates
    best_model.msl      source of the lowest mean-AIC model
    models/             {class}_{sim}_{iter}.msl
    timings.csv         wall times (kept out of the run log)
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from discovery import exceptions
from discovery.serializers import IterationRecordSerializer, RegretPointSerializer

logger = logging.getLogger(__name__)

RUN_LOG = "run_log.jsonl"
SUMMARY_COLUMNS = (
    "model_class",
    "simulation",
    "iteration",
    "mean_aic",
    "min_aic",
    "max_aic",
    "regret_size",
)
PARTICIPANT_COLUMNS = ("subject_id", "first_aic", "last_aic")
BAND_COLUMNS = ("scope", "aggregation", "iteration", "mean_aic", "min_aic", "max_aic", "count")
ALL_CLASSES = "all"
REFERENCE_SCOPE = "reference"


@dataclass(frozen=True)
class IterationSummary:
    model_class: str
    simulation: int
    iteration: int
    mean_aic: float
    subject_aics: tuple
    regret_size: int
    model_source: str

    @property
    def min_aic(self) -> float:
        return min(aic for _, aic in self.subject_aics)

    @property
    def max_aic(self) -> float:
        return max(aic for _, aic in self.subject_aics)

    @property
    def model_filename(self) -> str:
        return f"{self.model_class}_{self.simulation}_{self.iteration}.msl"


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    config: dict
    summaries: tuple
    bands: pd.DataFrame
    participants: pd.DataFrame
    reference_aics: tuple = ()

    @property
    def summary(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (
                    row.model_class,
                    row.simulation,
                    row.iteration,
                    row.mean_aic,
                    row.min_aic,
                    row.max_aic,
                    row.regret_size,
                )
                for row in self.summaries
            ],
            columns=list(SUMMARY_COLUMNS),
        )

    @property
    def best(self) -> IterationSummary:
        """Lowest mean AIC over all iterations; ties go to the earliest row."""
        return min(self.summaries, key=lambda row: row.mean_aic)

    @property
    def final_summaries(self) -> tuple:
        last = max(row.iteration for row in self.summaries)
        return tuple(row for row in self.summaries if row.iteration == last)

    def as_dict(self) -> dict:
        best = self.best
        finals = np.array([row.mean_aic for row in self.final_summaries])
        return {
            "best": {
                "model_class": best.model_class,
                "simulation": best.simulation,
                "iteration": best.iteration,
                "mean_aic": best.mean_aic,
                "model_source": best.model_source,
            },
            "final": {
                "iteration": self.final_summaries[0].iteration,
                "simulations": len(finals),
                "mean_aic": float(finals.mean()),
                "sd_aic": float(finals.std(ddof=1)) if len(finals) > 1 else 0.0,
            },
            "reference": self._reference_dict(float(finals.mean())),
            "bands": self.bands.to_dict(orient="records"),
        }

    def _reference_dict(self, final_mean_aic: float):
        """Reference predictor AIC and the final models' distance to it."""
        if not self.reference_aics:
            return None
        values = np.array([value for _, value in self.reference_aics])
        return {
            "subjects": len(values),
            "mean_aic": float(values.mean()),
            "sd_aic": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
            "final_gap": final_mean_aic - float(values.mean()),
        }


def summarize(simulation) -> tuple:
    return tuple(
        IterationSummary(
            model_class=simulation.model_class,
            simulation=simulation.simulation_index,
            iteration=record.iteration_index,
            mean_aic=record.mean_aic,
            subject_aics=tuple((fit.subject_id, fit.aic) for fit in record.fits),
            regret_size=record.regret_size,
            model_source=record.model_source,
        )
        for record in simulation.records
    )


def _band(scope: str, aggregation: str, iteration: int, values) -> tuple:
    values = np.asarray(values, dtype=float)
    return (
        scope,
        aggregation,
        iteration,
        float(values.mean()),
        float(values.min()),
        float(values.max()),
        int(values.size),
    )


def bands(summaries, reference_aics=()) -> pd.DataFrame:
    """
    Per-iteration mean/min/max AIC, overall and per model class, aggregated
    across simulation means and separately across every subject AIC. The
    reference predictor's subject AICs form their own constant scope.
    """
    classes = list(dict.fromkeys(row.model_class for row in summaries))
    iterations = sorted({row.iteration for row in summaries})
    rows = []
    for scope in [ALL_CLASSES, *classes]:
        for iteration in iterations:
            selected = [
                row
                for row in summaries
                if row.iteration == iteration
                and scope in (ALL_CLASSES, row.model_class)
            ]
            if not selected:
                continue
            rows.append(
                _band(scope, "simulations", iteration, [row.mean_aic for row in selected])
            )
            rows.append(
                _band(
                    scope,
                    "participants",
                    iteration,
                    [aic for row in selected for _, aic in row.subject_aics],
                )
            )
    if reference_aics:
        values = [value for _, value in reference_aics]
        rows.extend(
            _band(REFERENCE_SCOPE, "participants", iteration, values)
            for iteration in iterations
        )
    return pd.DataFrame(rows, columns=list(BAND_COLUMNS))


def participants(summaries) -> pd.DataFrame:
    """First- and last-iteration AIC per subject, averaged over simulations."""
    first = min(row.iteration for row in summaries)
    last = max(row.iteration for row in summaries)
    frame = pd.DataFrame(
        [
            (subject_id, row.iteration, aic)
            for row in summaries
            if row.iteration in (first, last)
            for subject_id, aic in row.subject_aics
        ],
        columns=["subject_id", "iteration", "aic"],
    )
    table = frame.pivot_table(
        index="subject_id", columns="iteration", values="aic", aggfunc="mean", sort=False
    )
    return pd.DataFrame(
        {
            "subject_id": table.index,
            "first_aic": table[first].to_numpy(),
            "last_aic": table[last].to_numpy(),
        },
        columns=list(PARTICIPANT_COLUMNS),
    )


def aggregate(summaries, config: dict = None, reference_aics=()) -> ExperimentReport:
    summaries = tuple(summaries)
    reference_aics = tuple(
        (str(subject), float(value)) for subject, value in reference_aics
    )
    if not summaries:
        raise exceptions.ValidationError("nothing to report: no iterations")
    return ExperimentReport(
        config=config or {},
        summaries=summaries,
        bands=bands(summaries, reference_aics),
        participants=participants(summaries),
        reference_aics=reference_aics,
    )


def build_report(simulations, config: dict = None) -> ExperimentReport:
    simulations = tuple(simulations)
    return aggregate(
        (row for simulation in simulations for row in summarize(simulation)),
        config,
        _shared_reference_aics(simulations),
    )


def _shared_reference_aics(simulations) -> tuple:
    return simulations[0].reference_aics if simulations else ()


def log_entries(simulation, log_regret_points: bool = False):
    for record in simulation.records:
        entry = {
            "type": "iteration",
            "model_class": simulation.model_class,
            "simulation": simulation.simulation_index,
            "seed": simulation.seed,
            **IterationRecordSerializer(record).data,
        }
        if log_regret_points:
            entry["regret_points"] = RegretPointSerializer(
                record.regret.points, many=True
            ).data
        yield entry


def write_run_log(path, config: dict, simulations, log_regret_points: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    simulations = tuple(simulations)
    header = {
        "type": "config",
        "config": config,
        "reference_aics": [
            {"subject_id": subject, "aic": value}
            for subject, value in _shared_reference_aics(simulations)
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for simulation in simulations:
            for entry in log_entries(simulation, log_regret_points):
                handle.write(json.dumps(entry, sort_keys=True) + "\n")
    return path


def read_run_log(path) -> tuple:
    """Return ``(config, summaries, reference_aics)`` from a run log."""
    path = Path(path)
    config, summaries, reference = {}, [], ()
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise exceptions.IoError(f"cannot read run log {path}: {exc}") from exc

    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            if entry["type"] == "config":
                config = entry["config"]
                reference = tuple(
                    (item["subject_id"], item["aic"])
                    for item in entry.get("reference_aics", ())
                )
                continue
            summaries.append(
                IterationSummary(
                    model_class=entry["model_class"],
                    simulation=entry["simulation"],
                    iteration=entry["iteration"],
                    mean_aic=entry["mean_aic"],
                    subject_aics=tuple(
                        (fit["subject_id"], fit["aic"]) for fit in entry["fits"]
                    ),
                    regret_size=entry["regret_size"],
                    model_source=entry["model_source"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise exceptions.SchemaError(
                f"malformed run log entry: {exc}", row=number
            ) from exc
    return config, tuple(summaries), reference


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def write_report(report: ExperimentReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    models_dir = out_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)

    _write_csv(report.summary, out_dir / "summary.csv")
    _write_csv(report.participants, out_dir / "participants.csv")
    _write_csv(report.bands, out_dir / "bands.csv")
    with open(out_dir / "report.json", "w", encoding="utf-8", newline="\n") as handle:
        json.dump(report.as_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    (out_dir / "best_model.msl").write_text(report.best.model_source, encoding="utf-8")
    for row in report.summaries:
        (models_dir / row.model_filename).write_text(row.model_source, encoding="utf-8")
    logger.info("Report written to %s", out_dir)
    return out_dir


def write_timings(simulations, path) -> Path:
    frame = pd.DataFrame(
        [
            (sim.model_class, sim.simulation_index, record.iteration_index, record.wall_time)
            for sim in simulations
            for record in sim.records
        ],
        columns=["model_class", "simulation", "iteration", "wall_time"],
    )
    _write_csv(frame, Path(path))
    return Path(path)


def write_experiment(simulations, config: dict, out_dir,
                     log_regret_points: bool = False) -> ExperimentReport:
    """Write the run log, timings and every aggregate report file."""
    out_dir = Path(out_dir)
    write_run_log(out_dir / RUN_LOG, config, simulations, log_regret_points)
    write_timings(simulations, out_dir / "timings.csv")
    report = build_report(simulations, config)
    write_report(report, out_dir)
    return report
