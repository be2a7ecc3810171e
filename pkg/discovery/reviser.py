"""
Model revision: render the revision prompt, ask a reviser for a new model,
and pull a valid MSL program out of whatever comes back.

Two revisers exist. ``LlmReviser`` talks to any OpenAI-compatible
chat-completion endpoint (``endpoint_url`` is the base URL, e.g.
``http://host:8000/v1``; the key is read from the environment variable named
by ``api_key_env``). ``ScriptedReviser`` replays a fixed list of responses
and makes whole runs deterministic.
"""
import logging
import os
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import openai
from openai import OpenAI

from discovery import exceptions
from discovery.config import ReviserConfig, ReviserMode
from discovery.msl import EPSILON, ModelProgram, parse, print_program, typecheck
from discovery.regret import RegretSet

logger = logging.getLogger(__name__)

DEFAULT_CAP = 200

TASK_DESCRIPTION = """\
I am studying human behavior in a multi-attribute decision-making experiment.

In this experiment, participants encounter a number of trials, in which they \
have to choose between two options labelled A and B.

These options are fictitious products that are each characterized by four \
features.

Each feature corresponds to a binary rating of an expert, either approving of \
the product (1) or not (0).

The four experts are ordered based on their validity (taking values of 90%, \
80%, 70%, and 60%), with the first feature corresponding to the ratings from \
the highest validity expert.

In each trial, people have to predict which of the shown options is superior \
in terms of quality based on the presented information."""

GRAMMAR_NOTE = f"""\
The model is written in MSL, a small expression language. `A` and `B` are the \
(trials x features) rating matrices of options A and B, `p[i]` is the i-th free \
parameter, and the `model` line must give the probability of choosing option B \
on every trial (it is clipped to [{EPSILON}, {1 - EPSILON}]). A program is a \
`params <k>;` header, optional `name = <expr>;` bindings and a final \
`model = <expr>;` line; `#` starts a comment. Expressions may use numbers, \
vectors with one number per feature such as `[0.9, 0.8, 0.7, 0.6]`, `+ - * /`, \
comparisons (`< <= > >= == !=`, giving 0 or 1) and the functions `dot`, `sum`, \
`logistic`, `exp`, `log`, `abs`, `min`, `max`, `clip(x, lo, hi)` and \
`where(cond, x, y)`. There are no loops, no user-defined functions and no \
trial-by-trial state."""

INSTRUCTIONS = """\
Please structure your answer as follows:

* Keep the structure of the program exactly the same.
* Do not change the comments.

* State the number of free parameters on the first line using the `params <k>;` header.

* Do not write any text besides that and do not elaborate any further."""

THINK_RE = re.compile(r"<think>.*?</think>", re.DOTALL)
FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
PROGRAM_RE = re.compile(
    r"^[ \t]*params[ \t]+-?\d+[ \t]*;.*?^[ \t]*model[ \t]*=[^;]*;",
    re.DOTALL | re.MULTILINE,
)


@dataclass(frozen=True)
class PromptBundle:
    user_text: str
    rendered_points: int
    system_text: str = ""


class RevisionStatus(str, Enum):
    ACCEPTED = "accepted"
    PARSE_FAILED_EXHAUSTED = "parse_failed_exhausted"
    ENDPOINT_ERROR = "endpoint_error"


@dataclass(frozen=True)
class RevisionOutcome:
    """
    Result of one reviser call. ``raw_responses`` holds every attempt in
    order; an endpoint failure appears as its error text.
    """

    status: RevisionStatus
    program: ModelProgram = None
    raw_response: str = ""
    attempts: int = 0
    error: str = ""
    raw_responses: tuple = ()

    @property
    def accepted(self) -> bool:
        return self.status is RevisionStatus.ACCEPTED


def _ratings(option) -> str:
    return "[" + ", ".join(str(value) for value in option) + "]"


def render_point(point) -> str:
    return (
        f"Option A ratings: {_ratings(point.option_a)}; "
        f"Option B ratings: {_ratings(point.option_b)}; "
        f"human choice: {point.human_choice.value}; "
        f"model P(choice) = {point.model_prob_of_choice:.2f}; "
        f"reference P(choice) = {point.reference_prob_of_choice:.2f}"
    )


def _model_text(program: ModelProgram) -> str:
    return (program.source or print_program(program)).strip()


def build_prompt(current_model: ModelProgram, regret: RegretSet,
                 cap: int = DEFAULT_CAP, system_text: str = "",
                 previous_models=()) -> PromptBundle:
    """
    Instantiate the revision prompt with the current model and the top
    ``cap`` regret points. An empty regret set means convergence.
    """
    if cap < 1:
        raise exceptions.ValidationError(f"cap must be >= 1, got {cap}")
    if not regret:
        raise exceptions.EmptyRegretSet()

    points = regret.top(cap)
    sections = [
        TASK_DESCRIPTION,
        "I have the following computational model that is currently my best "
        "guess for how people make decisions in this experiment:",
        GRAMMAR_NOTE,
        _model_text(current_model),
    ]
    if previous_models:
        sections.append("Earlier versions of the model were:")
        sections.extend(_model_text(program) for program in previous_models)
    sections += [
        "This model does capture human behavior reasonably well overall, but "
        "there are the following data points in which it does not capture "
        "human behavior yet:",
        "\n".join(render_point(point) for point in points),
        "Can you suggest an improved model that is able to capture human "
        "behavior in the listed situations?",
        INSTRUCTIONS,
    ]
    return PromptBundle(
        user_text="\n\n".join(sections) + "\n",
        rendered_points=len(points),
        system_text=system_text,
    )


def _strip_reasoning(response: str) -> str:
    if "</think>" in response:
        response = response.rsplit("</think>", 1)[1]
    return THINK_RE.sub("", response)


def extract_model(response: str, num_features: int = 4) -> ModelProgram:
    """
    Find the single MSL program in a reviser response, then parse and
    typecheck it. Reasoning blocks are discarded; when fenced code blocks
    hold a program, only fenced blocks are searched.
    """
    text = _strip_reasoning(response)
    blocks = [block for block in FENCE_RE.findall(text) if PROGRAM_RE.search(block)]
    candidates = list(
        dict.fromkeys(
            match.group(0).strip()
            for source in (blocks or [text])
            for match in PROGRAM_RE.finditer(source)
        )
    )
    if not candidates:
        raise exceptions.NoProgramFound(
            f"no `params <k>; ... model = <expr>;` program in response: "
            f"{text.strip()[:200]!r}"
        )
    if len(candidates) > 1:
        raise exceptions.MultiplePrograms(
            f"response holds {len(candidates)} different programs"
        )
    source = candidates[0] + "\n"
    try:
        program = parse(source)
        typecheck(program, num_features)
    except exceptions.MslError as exc:
        exc.excerpt = source
        raise
    return program


class Reviser(ABC):
    def __init__(self, num_features: int = 4):
        self.num_features = num_features
        self.prompts = []

    @abstractmethod
    def revise(self, prompt: PromptBundle) -> RevisionOutcome:
        """Propose a revised model for the prompt."""


class ScriptedReviser(Reviser):
    """
    Replays a script of responses. ``script[0]`` is the starting model;
    call k returns ``script[k]`` and the last entry repeats once the script
    runs out. Prompts are recorded but otherwise ignored.
    """

    def __init__(self, script, num_features: int = 4):
        super().__init__(num_features)
        self.script = tuple(script)
        if len(self.script) < 2:
            raise exceptions.ValidationError(
                "a revision script needs a starting model and at least one revision"
            )
        self.calls = 0

    @classmethod
    def from_directory(cls, path, num_features: int = 4) -> "ScriptedReviser":
        path = Path(path)
        files = sorted(path.glob("*.msl"))
        if not files:
            raise exceptions.IoError(f"no .msl files in script directory {path}")
        return cls(
            [file.read_text(encoding="utf-8") for file in files], num_features
        )

    def revise(self, prompt: PromptBundle) -> RevisionOutcome:
        self.prompts.append(prompt)
        self.calls += 1
        response = self.script[min(self.calls, len(self.script) - 1)]
        try:
            program = extract_model(response, self.num_features)
        except exceptions.InputError as exc:
            logger.warning("Scripted revision %d is invalid: %s", self.calls, exc)
            return RevisionOutcome(
                status=RevisionStatus.PARSE_FAILED_EXHAUSTED,
                raw_response=response,
                attempts=1,
                error=str(exc),
                raw_responses=(response,),
            )
        return RevisionOutcome(
            status=RevisionStatus.ACCEPTED,
            program=program,
            raw_response=response,
            attempts=1,
            raw_responses=(response,),
        )


class LlmReviser(Reviser):
    """
    Chat-completion reviser. Endpoint failures and unusable responses share
    one retry budget of ``max_retries``; the same prompt is re-sampled.
    """

    def __init__(self, config: ReviserConfig, num_features: int = 4,
                 http_client=None, sleep=time.sleep):
        super().__init__(num_features)
        self.config = config
        self.sleep = sleep
        api_key = os.environ.get(config.api_key_env, "")
        if not api_key:
            logger.warning(
                "%s is not set; calling %s without credentials",
                config.api_key_env,
                config.endpoint_url,
            )
        self.client = OpenAI(
            base_url=config.endpoint_url,
            api_key=api_key or "EMPTY",
            timeout=config.timeout,
            max_retries=0,
            http_client=http_client,
        )

    def _messages(self, prompt: PromptBundle) -> list:
        messages = []
        if prompt.system_text:
            messages.append({"role": "system", "content": prompt.system_text})
        messages.append({"role": "user", "content": prompt.user_text})
        return messages

    def revise(self, prompt: PromptBundle) -> RevisionOutcome:
        self.prompts.append(prompt)
        config = self.config
        attempts_allowed = config.max_retries + 1
        status, error, raw = RevisionStatus.ENDPOINT_ERROR, "", ""
        responses = []

        for attempt in range(1, attempts_allowed + 1):
            try:
                completion = self.client.chat.completions.create(
                    model=config.model_name,
                    messages=self._messages(prompt),
                    temperature=config.temperature,
                    top_p=config.top_p,
                )
            except openai.APIError as exc:
                status, error = RevisionStatus.ENDPOINT_ERROR, str(exc)
                responses.append(f"endpoint error: {exc}")
                logger.warning(
                    "Reviser attempt %d/%d failed at the endpoint: %s",
                    attempt,
                    attempts_allowed,
                    exc,
                )
                if attempt < attempts_allowed and config.retry_backoff > 0:
                    self.sleep(config.retry_backoff * attempt)
                continue

            raw = (
                completion.choices[0].message.content or ""
                if completion.choices
                else ""
            )
            responses.append(raw)
            try:
                program = extract_model(raw, self.num_features)
            except exceptions.InputError as exc:
                status, error = RevisionStatus.PARSE_FAILED_EXHAUSTED, str(exc)
                logger.warning(
                    "Reviser attempt %d/%d returned no usable program: %s",
                    attempt,
                    attempts_allowed,
                    exc,
                )
                continue
            logger.info("Reviser accepted a program on attempt %d", attempt)
            return RevisionOutcome(
                status=RevisionStatus.ACCEPTED,
                program=program,
                raw_response=raw,
                attempts=attempt,
                raw_responses=tuple(responses),
            )

        return RevisionOutcome(
            status=status,
            raw_response=raw,
            attempts=attempts_allowed,
            error=error,
            raw_responses=tuple(responses),
        )


def build_reviser(config: ReviserConfig, num_features: int = 4) -> Reviser:
    if config.mode is ReviserMode.SCRIPTED:
        if not config.script_id:
            raise exceptions.ValidationError(
                "scripted mode needs a script directory (script_id)"
            )
        return ScriptedReviser.from_directory(config.script_id, num_features)
    return LlmReviser(config, num_features)
