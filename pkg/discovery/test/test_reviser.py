import json
import tempfile

import httpx
from django.test import SimpleTestCase

from discovery import exceptions
from discovery.config import ReviserConfig, ReviserMode
from discovery.data import Choice
from discovery.msl import get_program, parse
from discovery.regret import RegretPoint, RegretSet
from discovery.reviser import (
    LlmReviser,
    PromptBundle,
    RevisionStatus,
    ScriptedReviser,
    build_prompt,
    build_reviser,
    extract_model,
    render_point,
)
from discovery.serializers import RevisionOutcomeSerializer
from discovery.test.samples import RECOVERY_SCRIPT

EQW_SOURCE = "params 1;\nmodel = logistic(p[0] * (sum(B) - sum(A)));\n"
WADD_SOURCE = (
    "params 1;\n"
    "validities = [0.9, 0.8, 0.7, 0.6];\n"
    "model = logistic(p[0] * (dot(B, validities) - dot(A, validities)));\n"
)
ENDPOINT = "http://reviser.test/v1"


def sample_point(trial_index=0, delta=1.0, **params):
    defaults = {
        "subject_id": "s001",
        "trial_index": trial_index,
        "option_a": (1, 0, 1, 0),
        "option_b": (0, 1, 1, 1),
        "human_choice": Choice.B,
        "model_prob_of_choice": 0.25,
        "model_nll": 1.386,
        "reference_nll": 0.105,
        "delta": delta,
    }
    defaults.update(params)
    return RegretPoint(**defaults)


def sample_regret(size=3):
    return RegretSet(
        points=tuple(
            sample_point(index, delta=2.0 - index * 0.1) for index in range(size)
        ),
        threshold=0.05,
    )


def completion(content):
    return {
        "id": "chatcmpl-test",
        "object": "chat.completion",
        "created": 0,
        "model": "test-model",
        "choices": [
            {
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop",
            }
        ],
    }


class PromptTests(SimpleTestCase):
    def test_prompt_contents(self):
        prompt = build_prompt(get_program("eqw"), sample_regret(), system_text="sys")

        self.assertIn("multi-attribute decision-making experiment", prompt.user_text)
        self.assertIn("params 1;", prompt.user_text)
        self.assertIn("model = logistic(p[0] * (value_B - value_A));", prompt.user_text)
        self.assertIn(render_point(sample_point()), prompt.user_text)
        self.assertEqual(prompt.rendered_points, 3)
        self.assertEqual(prompt.system_text, "sys")

    def test_render_point(self):
        self.assertEqual(
            render_point(sample_point()),
            "Option A ratings: [1, 0, 1, 0]; Option B ratings: [0, 1, 1, 1]; "
            "human choice: B; model P(choice) = 0.25; reference P(choice) = 0.90",
        )

    def test_cap_keeps_highest_delta_points(self):
        regret = sample_regret(5)

        prompt = build_prompt(get_program("eqw"), regret, cap=2)

        self.assertEqual(prompt.rendered_points, 2)
        self.assertEqual(prompt.user_text.count("human choice:"), 2)

    def test_previous_models_are_listed(self):
        prompt = build_prompt(
            get_program("wadd"),
            sample_regret(),
            previous_models=[parse(EQW_SOURCE)],
        )

        self.assertIn("Earlier versions of the model were:", prompt.user_text)
        self.assertIn("sum(B) - sum(A)", prompt.user_text)

    def test_empty_regret_set(self):
        with self.assertRaises(exceptions.EmptyRegretSet):
            build_prompt(get_program("eqw"), RegretSet(points=(), threshold=0.05))

    def test_cap_must_be_positive(self):
        with self.assertRaises(exceptions.ValidationError):
            build_prompt(get_program("eqw"), sample_regret(), cap=0)


class ExtractModelTests(SimpleTestCase):
    def test_fenced_block(self):
        response = f"Here is the model:\n\n```msl\n{WADD_SOURCE}```\nDone."

        self.assertEqual(extract_model(response), parse(WADD_SOURCE))

    def test_prose_without_fences(self):
        response = f"Sure, here it is:\n\n{EQW_SOURCE}\nHope this helps."

        self.assertEqual(extract_model(response), parse(EQW_SOURCE))

    def test_reasoning_is_discarded(self):
        response = (
            "<think>Maybe\nparams 0;\nmodel = sum(A) * 0 + 0.5;\nno.</think>\n"
            f"```\n{EQW_SOURCE}```"
        )

        self.assertEqual(extract_model(response), parse(EQW_SOURCE))

    def test_fences_take_priority_over_prose(self):
        response = f"{EQW_SOURCE}\nbut better:\n```msl\n{WADD_SOURCE}```"

        self.assertEqual(extract_model(response), parse(WADD_SOURCE))

    def test_repeated_program_is_one_candidate(self):
        response = f"```\n{EQW_SOURCE}```\nAgain:\n```\n{EQW_SOURCE}```"

        self.assertEqual(extract_model(response), parse(EQW_SOURCE))

    def test_no_program(self):
        with self.assertRaises(exceptions.NoProgramFound):
            extract_model("I would need more data to answer that.")

    def test_multiple_programs(self):
        with self.assertRaises(exceptions.MultiplePrograms):
            extract_model(f"```\n{EQW_SOURCE}```\nor\n```\n{WADD_SOURCE}```")

    def test_invalid_program_keeps_excerpt(self):
        cases = {
            exceptions.ParseError: "params 1;\nmodel = logistic(p[0] * );",
            exceptions.TypeCheckError: "params 0;\nmodel = A;",
            exceptions.HeaderError: "params 0;\nmodel = logistic(p[0] * sum(B));",
        }
        for error, source in cases.items():
            with self.subTest(error=error.__name__):
                with self.assertRaises(error) as context:
                    extract_model(f"```\n{source}\n```")
                self.assertIn("model =", context.exception.excerpt)


class ScriptedReviserTests(SimpleTestCase):
    def prompt(self):
        return PromptBundle(user_text="revise", rendered_points=1)

    def test_replays_script_and_repeats_last_entry(self):
        reviser = ScriptedReviser([EQW_SOURCE, WADD_SOURCE, EQW_SOURCE])

        programs = [reviser.revise(self.prompt()).program for _ in range(4)]

        self.assertEqual(
            programs,
            [parse(WADD_SOURCE), parse(EQW_SOURCE), parse(EQW_SOURCE), parse(EQW_SOURCE)],
        )
        self.assertEqual(len(reviser.prompts), 4)

    def test_invalid_entry_is_a_failed_revision(self):
        reviser = ScriptedReviser([EQW_SOURCE, "no model here"])

        outcome = reviser.revise(self.prompt())

        self.assertIs(outcome.status, RevisionStatus.PARSE_FAILED_EXHAUSTED)
        self.assertIsNone(outcome.program)
        self.assertFalse(outcome.accepted)

    def test_script_needs_two_entries(self):
        with self.assertRaises(exceptions.ValidationError):
            ScriptedReviser([EQW_SOURCE])

    def test_from_directory(self):
        reviser = ScriptedReviser.from_directory(RECOVERY_SCRIPT)

        self.assertEqual(len(reviser.script), 3)
        self.assertEqual(parse(reviser.script[0]), get_program("eqw"))
        outcome = reviser.revise(self.prompt())
        self.assertEqual(outcome.program, get_program("wadd"))
        outcome = reviser.revise(self.prompt())
        self.assertEqual(outcome.program, get_program("adaptive"))

    def test_empty_directory(self):
        with tempfile.TemporaryDirectory() as directory:
            with self.assertRaises(exceptions.IoError):
                ScriptedReviser.from_directory(directory)

    def test_build_reviser(self):
        scripted = build_reviser(
            ReviserConfig(mode=ReviserMode.SCRIPTED, script_id=str(RECOVERY_SCRIPT))
        )
        llm = build_reviser(ReviserConfig(endpoint_url=ENDPOINT))

        self.assertIsInstance(scripted, ScriptedReviser)
        self.assertIsInstance(llm, LlmReviser)
        with self.assertRaises(exceptions.ValidationError):
            build_reviser(ReviserConfig(mode=ReviserMode.SCRIPTED))


class LlmReviserTests(SimpleTestCase):
    def setUp(self):
        self.requests = []
        self.sleeps = []

    def reviser(self, responses, **config):
        """LlmReviser whose endpoint answers with ``responses`` in turn."""
        responses = list(responses)

        def handler(request):
            self.requests.append(json.loads(request.content))
            status, body = responses.pop(0) if len(responses) > 1 else responses[0]
            if status != 200:
                return httpx.Response(status, json={"error": {"message": body}})
            return httpx.Response(200, json=completion(body))

        config = ReviserConfig(endpoint_url=ENDPOINT, **config)
        return LlmReviser(
            config,
            http_client=httpx.Client(transport=httpx.MockTransport(handler)),
            sleep=self.sleeps.append,
        )

    def prompt(self, system_text=""):
        return PromptBundle(
            user_text="revise", rendered_points=1, system_text=system_text
        )

    def test_accepts_fenced_program(self):
        reviser = self.reviser([(200, f"```msl\n{WADD_SOURCE}```")])

        outcome = reviser.revise(self.prompt(system_text="be brief"))

        self.assertIs(outcome.status, RevisionStatus.ACCEPTED)
        self.assertEqual(outcome.program, parse(WADD_SOURCE))
        self.assertEqual(outcome.attempts, 1)
        request = self.requests[0]
        self.assertEqual(request["model"], "Qwen/Qwen3-32B")
        self.assertEqual(request["temperature"], 0.6)
        self.assertEqual(request["top_p"], 0.95)
        self.assertEqual(
            request["messages"],
            [
                {"role": "system", "content": "be brief"},
                {"role": "user", "content": "revise"},
            ],
        )

    def test_accepts_prose_program(self):
        reviser = self.reviser([(200, f"My suggestion:\n\n{EQW_SOURCE}")])

        outcome = reviser.revise(self.prompt())

        self.assertIs(outcome.status, RevisionStatus.ACCEPTED)
        self.assertEqual(outcome.program, parse(EQW_SOURCE))
        self.assertEqual(self.requests[0]["messages"][0]["role"], "user")

    def test_retries_until_a_program_arrives(self):
        reviser = self.reviser(
            [(200, "hmm"), (200, "let me think"), (200, f"```\n{EQW_SOURCE}```")]
        )

        outcome = reviser.revise(self.prompt())

        self.assertIs(outcome.status, RevisionStatus.ACCEPTED)
        self.assertEqual(outcome.attempts, 3)
        self.assertEqual(self.sleeps, [])

    def test_garbage_exhausts_the_retry_budget(self):
        reviser = self.reviser(
            [(200, "no idea"), (200, "still no idea"), (200, "no idea, sorry")]
        )

        outcome = reviser.revise(self.prompt())

        self.assertIs(outcome.status, RevisionStatus.PARSE_FAILED_EXHAUSTED)
        self.assertEqual(outcome.attempts, 3)
        self.assertEqual(len(self.requests), 3)
        self.assertEqual(outcome.raw_response, "no idea, sorry")
        self.assertEqual(
            outcome.raw_responses, ("no idea", "still no idea", "no idea, sorry")
        )
        self.assertIsNone(outcome.program)

    def test_every_attempt_is_serialized(self):
        """Endpoint failures and rejected responses all reach the outcome record"""
        reviser = self.reviser(
            [(500, "boom"), (200, "hmm"), (200, f"```\n{EQW_SOURCE}```")]
        )

        outcome = reviser.revise(self.prompt())
        data = RevisionOutcomeSerializer(outcome).data

        self.assertEqual(data["status"], "accepted")
        self.assertEqual(len(data["raw_responses"]), 3)
        self.assertTrue(data["raw_responses"][0].startswith("endpoint error:"))
        self.assertIn("boom", data["raw_responses"][0])
        self.assertEqual(data["raw_responses"][1:], ["hmm", f"```\n{EQW_SOURCE}```"])

    def test_endpoint_errors_back_off(self):
        reviser = self.reviser([(503, "overloaded")], retry_backoff=0.5)

        outcome = reviser.revise(self.prompt())

        self.assertIs(outcome.status, RevisionStatus.ENDPOINT_ERROR)
        self.assertEqual(outcome.attempts, 3)
        self.assertEqual(self.sleeps, [0.5, 1.0])

    def test_endpoint_error_then_success(self):
        reviser = self.reviser([(500, "boom"), (200, f"```\n{EQW_SOURCE}```")])

        outcome = reviser.revise(self.prompt())

        self.assertIs(outcome.status, RevisionStatus.ACCEPTED)
        self.assertEqual(outcome.attempts, 2)
        self.assertEqual(self.sleeps, [1.0])

    def test_no_retries(self):
        reviser = self.reviser([(200, "nothing")], max_retries=0)

        outcome = reviser.revise(self.prompt())

        self.assertEqual(outcome.attempts, 1)
        self.assertEqual(len(self.requests), 1)
