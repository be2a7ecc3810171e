"""
Trial data and reference likelihoods.

Trials are paired binary feature vectors (expert ratings of two products)
plus the participant's choice. Reference likelihoods are per-trial negative
natural-log likelihoods of that choice under the black-box predictor, stored
per choice rather than per token.

File formats:

* trials CSV: ``subject_id,trial_index,a1..aN,b1..bN,choice``
* trials JSON: ``{"num_features": N, "records": [{"subject_id", "trial_index",
  "option_a", "option_b", "choice"}, ...]}``
* reference CSV: ``subject_id,trial_index,nll``

All files are UTF-8 with LF line endings.
"""
import json
import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from types import MappingProxyType

import jsonschema
import numpy as np
import pandas as pd

from discovery import exceptions
from discovery.serializers import ReferenceRowSerializer, TrialRowSerializer

logger = logging.getLogger(__name__)

NUM_FEATURES = 4
REFERENCE_COLUMNS = ("subject_id", "trial_index", "nll")
FEATURE_COLUMN = re.compile(r"^([ab])(\d+)$")

TRIALS_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["records"],
    "properties": {
        "num_features": {"type": "integer", "minimum": 1},
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "subject_id",
                    "trial_index",
                    "option_a",
                    "option_b",
                    "choice",
                ],
                "properties": {
                    "subject_id": {"type": "string", "minLength": 1},
                    "trial_index": {"type": "integer", "minimum": 0},
                    "option_a": {"type": "array", "items": {"type": "integer"}},
                    "option_b": {"type": "array", "items": {"type": "integer"}},
                    "choice": {"enum": ["A", "B"]},
                },
            },
        },
    },
}


class Choice(str, Enum):
    A = "A"
    B = "B"


class TrialFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


@dataclass(frozen=True)
class TrialRecord:
    subject_id: str
    trial_index: int
    option_a: tuple
    option_b: tuple
    choice: Choice

    @property
    def key(self) -> tuple:
        return (self.subject_id, self.trial_index)


@dataclass(frozen=True, eq=False)
class SubjectTrials:
    """One subject's trials as arrays, ordered by trial index."""

    subject_id: str
    trial_indices: np.ndarray
    option_a: np.ndarray
    option_b: np.ndarray
    chose_b: np.ndarray

    def __len__(self) -> int:
        return len(self.trial_indices)

    @property
    def choices(self) -> tuple:
        return tuple(Choice.B if b else Choice.A for b in self.chose_b)


@dataclass(frozen=True)
class TrialSet:
    records: tuple
    num_features: int = NUM_FEATURES

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        self._validate()

    def _validate(self) -> None:
        seen = set()
        indices = {}
        for record in self.records:
            for side, option in (("a", record.option_a), ("b", record.option_b)):
                if len(option) != self.num_features:
                    raise exceptions.ValidationError(
                        f"option_{side} has {len(option)} features, "
                        f"expected {self.num_features}",
                        key=record.key,
                    )
                for position, value in enumerate(option, start=1):
                    if value not in (0, 1) or isinstance(value, bool):
                        raise exceptions.ValidationError(
                            f"feature {side}{position} must be 0 or 1, "
                            f"got {value!r}",
                            key=record.key,
                        )
            if not isinstance(record.choice, Choice):
                raise exceptions.ValidationError(
                    f"choice must be A or B, got {record.choice!r}",
                    key=record.key,
                )
            if record.key in seen:
                raise exceptions.ValidationError(
                    "duplicate trial", key=record.key
                )
            seen.add(record.key)
            indices.setdefault(record.subject_id, []).append(record.trial_index)

        for subject_id, subject_indices in indices.items():
            missing = sorted(set(range(len(subject_indices))) - set(subject_indices))
            if missing:
                raise exceptions.ValidationError(
                    "trial indices must be contiguous from 0; "
                    f"trial {missing[0]} is missing",
                    key=(subject_id, missing[0]),
                )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @cached_property
    def subject_ids(self) -> tuple:
        return tuple(dict.fromkeys(record.subject_id for record in self.records))

    @cached_property
    def keys(self) -> tuple:
        return tuple(record.key for record in self.records)

    @cached_property
    def _subjects(self) -> dict:
        grouped = {}
        for record in self.records:
            grouped.setdefault(record.subject_id, []).append(record)
        subjects = {}
        for subject_id, records in grouped.items():
            records.sort(key=lambda record: record.trial_index)
            subjects[subject_id] = SubjectTrials(
                subject_id=subject_id,
                trial_indices=_frozen(
                    np.array([r.trial_index for r in records], dtype=int)
                ),
                option_a=_frozen(
                    np.array([r.option_a for r in records], dtype=float)
                ),
                option_b=_frozen(
                    np.array([r.option_b for r in records], dtype=float)
                ),
                chose_b=_frozen(
                    np.array([r.choice is Choice.B for r in records], dtype=bool)
                ),
            )
        return subjects

    def subject(self, subject_id: str) -> SubjectTrials:
        try:
            return self._subjects[subject_id]
        except KeyError:
            raise exceptions.ValidationError(
                "unknown subject", key=subject_id
            ) from None

    def subjects(self) -> tuple:
        return tuple(self._subjects[subject_id] for subject_id in self.subject_ids)


@dataclass(frozen=True)
class ReferenceLikelihoods:
    entries: MappingProxyType

    def __post_init__(self):
        entries = MappingProxyType(dict(self.entries))
        for key, nll in entries.items():
            if not math.isfinite(nll) or nll < 0:
                raise exceptions.ValidationError(
                    f"reference nll must be finite and >= 0, got {nll!r}",
                    key=key,
                )
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def nll(self, subject_id: str, trial_index: int) -> float:
        return self.entries[(subject_id, trial_index)]

    def for_subject(self, subject: SubjectTrials) -> np.ndarray:
        return np.array(
            [
                self.entries[(subject.subject_id, int(trial_index))]
                for trial_index in subject.trial_indices
            ],
            dtype=float,
        )

    def validate_alignment(self, trials: TrialSet) -> None:
        expected = set(trials.keys)
        missing = [key for key in trials.keys if key not in self.entries]
        extra = sorted(key for key in self.entries if key not in expected)
        if missing:
            raise exceptions.AlignmentError(
                "reference likelihoods missing for trial keys", offenders=missing
            )
        if extra:
            raise exceptions.AlignmentError(
                "reference likelihoods for unknown trial keys", offenders=extra
            )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _infer_format(path: Path, format) -> TrialFormat:
    if format is not None:
        return TrialFormat(format)
    if path.suffix.lower() == ".json":
        return TrialFormat.JSON
    return TrialFormat.CSV


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path, dtype=str, keep_default_na=False, encoding="utf-8"
        )
    except pd.errors.EmptyDataError:
        raise exceptions.SchemaError("file is empty", row=1) from None
    except pd.errors.ParserError as exc:
        raise exceptions.SchemaError(f"malformed CSV: {exc}") from exc


def _feature_count(columns) -> int:
    positions = {"a": set(), "b": set()}
    for column in columns:
        match = FEATURE_COLUMN.match(column)
        if match:
            positions[match.group(1)].add(int(match.group(2)))
    num_features = len(positions["a"])
    for side, found in positions.items():
        expected = set(range(1, num_features + 1))
        if found != expected or not found:
            missing = sorted(expected - found) or [1]
            raise exceptions.SchemaError(
                f"missing column {side}{missing[0]}", row=1, column=side
            )
    return num_features


def trial_set_from_rows(rows, num_features: int = NUM_FEATURES,
                        first_row: int = 1) -> TrialSet:
    """
    Build a TrialSet from flat rows (the CSV column layout, as dicts).

    Row numbers in errors count from ``first_row``.
    """
    records = []
    for row_number, row in enumerate(rows, start=first_row):
        serializer = TrialRowSerializer(data=row, num_features=num_features)
        if not serializer.is_valid():
            column, errors = next(iter(serializer.errors.items()))
            raise exceptions.SchemaError(
                f"column {column}: {errors[0]}", row=row_number, column=column
            )
        data = serializer.validated_data
        key = (data["subject_id"], data["trial_index"])
        for side in ("a", "b"):
            for position in range(1, num_features + 1):
                column = f"{side}{position}"
                if data[column] not in (0, 1):
                    raise exceptions.ValidationError(
                        f"column {column} must be 0 or 1, got {data[column]}",
                        key=key,
                    )
        records.append(
            TrialRecord(
                subject_id=data["subject_id"],
                trial_index=data["trial_index"],
                option_a=tuple(
                    data[f"a{i}"] for i in range(1, num_features + 1)
                ),
                option_b=tuple(
                    data[f"b{i}"] for i in range(1, num_features + 1)
                ),
                choice=Choice(data["choice"]),
            )
        )
    return TrialSet(records, num_features)


def reference_from_rows(rows, trials: TrialSet,
                        first_row: int = 1) -> ReferenceLikelihoods:
    entries = {}
    duplicates = []
    for row_number, row in enumerate(rows, start=first_row):
        serializer = ReferenceRowSerializer(data=row)
        if not serializer.is_valid():
            column, errors = next(iter(serializer.errors.items()))
            raise exceptions.SchemaError(
                f"column {column}: {errors[0]}", row=row_number, column=column
            )
        data = serializer.validated_data
        key = (data["subject_id"], data["trial_index"])
        nll = data["nll"]
        if not math.isfinite(nll) or nll < 0:
            raise exceptions.ValidationError(
                f"nll must be finite and >= 0, got {nll!r}", key=key
            )
        if key in entries:
            duplicates.append(key)
        entries[key] = nll
    if duplicates:
        raise exceptions.AlignmentError(
            "duplicate reference entries", offenders=duplicates
        )
    reference = ReferenceLikelihoods(entries)
    reference.validate_alignment(trials)
    return reference


def load_trials(path, format=None) -> TrialSet:
    path = Path(path)
    trial_format = _infer_format(path, format)
    try:
        if trial_format is TrialFormat.CSV:
            frame = _read_csv(path)
            num_features = _feature_count(frame.columns)
            for column in ("subject_id", "trial_index", "choice"):
                if column not in frame.columns:
                    raise exceptions.SchemaError(
                        f"missing column {column}", row=1, column=column
                    )
            trials = trial_set_from_rows(
                frame.to_dict(orient="records"), num_features, first_row=2
            )
        else:
            with open(path, encoding="utf-8") as handle:
                document = json.load(handle)
            trials = _trial_set_from_document(document)
    except OSError as exc:
        raise exceptions.IoError(f"cannot read trials file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise exceptions.SchemaError(
            f"invalid JSON: {exc.msg}", row=exc.lineno
        ) from exc

    logger.info(
        "Loaded %d trials for %d subjects from %s",
        len(trials),
        len(trials.subject_ids),
        path,
    )
    return trials


def _trial_set_from_document(document) -> TrialSet:
    error = jsonschema.exceptions.best_match(
        jsonschema.Draft202012Validator(TRIALS_JSON_SCHEMA).iter_errors(document)
    )
    if error is not None:
        path = list(error.absolute_path)
        row = path[1] + 1 if len(path) > 1 and path[0] == "records" else None
        column = path[2] if len(path) > 2 else None
        raise exceptions.SchemaError(error.message, row=row, column=column)
    num_features = document.get("num_features", NUM_FEATURES)
    records = [
        TrialRecord(
            subject_id=entry["subject_id"],
            trial_index=entry["trial_index"],
            option_a=tuple(entry["option_a"]),
            option_b=tuple(entry["option_b"]),
            choice=Choice(entry["choice"]),
        )
        for entry in document["records"]
    ]
    return TrialSet(records, num_features)


def load_reference(path, trials: TrialSet) -> ReferenceLikelihoods:
    path = Path(path)
    try:
        frame = _read_csv(path)
    except FileNotFoundError:
        raise exceptions.AlignmentError(
            f"no reference likelihoods at {path}; unmatched trial keys",
            offenders=trials.keys,
        ) from None
    except OSError as exc:
        raise exceptions.IoError(
            f"cannot read reference file {path}: {exc}"
        ) from exc
    for column in REFERENCE_COLUMNS:
        if column not in frame.columns:
            raise exceptions.SchemaError(
                f"missing column {column}", row=1, column=column
            )
    reference = reference_from_rows(
        frame.to_dict(orient="records"), trials, first_row=2
    )
    logger.info("Loaded %d reference likelihoods from %s", len(reference), path)
    return reference


def write_trials(trials: TrialSet, path, format=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trial_format = _infer_format(path, format)
    if trial_format is TrialFormat.JSON:
        document = {
            "num_features": trials.num_features,
            "records": [
                {
                    "subject_id": record.subject_id,
                    "trial_index": record.trial_index,
                    "option_a": list(record.option_a),
                    "option_b": list(record.option_b),
                    "choice": record.choice.value,
                }
                for record in trials
            ],
        }
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(document, handle, indent=2)
            handle.write("\n")
        return path

    features = range(1, trials.num_features + 1)
    columns = (
        ["subject_id", "trial_index"]
        + [f"a{i}" for i in features]
        + [f"b{i}" for i in features]
        + ["choice"]
    )
    rows = [
        (record.subject_id, record.trial_index)
        + record.option_a
        + record.option_b
        + (record.choice.value,)
        for record in trials
    ]
    pd.DataFrame(rows, columns=columns).to_csv(
        path, index=False, lineterminator="\n", encoding="utf-8"
    )
    return path


def write_reference(reference: ReferenceLikelihoods, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [
        (subject_id, trial_index, repr(float(nll)))
        for (subject_id, trial_index), nll in reference.entries.items()
    ]
    pd.DataFrame(rows, columns=list(REFERENCE_COLUMNS)).to_csv(
        path, index=False, lineterminator="\n", encoding="utf-8"
    )
    return path
