import json
import random
import tempfile
from pathlib import Path

import httpx
import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from discovery import exceptions
from discovery.config import AcceptancePolicy, ReviserConfig, ReviserMode, RunConfig
from discovery.data import ReferenceLikelihoods
from discovery.engine import (
    Dataset,
    build_run_config,
    run_experiment,
    run_simulation,
)
from discovery.fitting import aic, fit_subjects
from discovery.msl import get_program, print_program, typecheck
from discovery.reports import (
    ALL_CLASSES,
    REFERENCE_SCOPE,
    RUN_LOG,
    aggregate,
    build_report,
    read_run_log,
    summarize,
    write_experiment,
    write_run_log,
)
from discovery.reviser import LlmReviser, RevisionStatus, ScriptedReviser
from discovery.seeds import derive_seed
from discovery.synth import GeneratorSpec, generate
from discovery.test.samples import (
    NAN_PROGRAM,
    RECOVERY_SCRIPT,
    UNIFORM_PROGRAM,
    sample_dataset,
)

EQW = print_program(get_program("eqw"))
WADD = print_program(get_program("wadd"))
TTB = print_program(get_program("ttb"))
ADAPTIVE = print_program(get_program("adaptive"))


def sample_config(**params) -> RunConfig:
    defaults = {
        "trials_path": "trials.csv",
        "reference_path": "reference.csv",
        "output_dir": "runs",
        "iterations": 2,
        "simulations_per_class": 1,
        "restarts": 3,
        "model_classes": ("eqw",),
        "reviser": ReviserConfig(
            mode=ReviserMode.SCRIPTED, script_id=str(RECOVERY_SCRIPT)
        ),
    }
    defaults.update(params)
    return RunConfig(**defaults)


def sample_data(**params) -> Dataset:
    return Dataset(*sample_dataset(**params))


def self_reference(trials, model_class, config) -> ReferenceLikelihoods:
    """Reference NLLs equal to the fitted class baseline's own NLLs."""
    fits = fit_subjects(
        typecheck(get_program(model_class)),
        trials,
        seed=derive_seed(config.seed, model_class, 0),
        restarts=config.restarts,
    )
    return ReferenceLikelihoods(
        {
            (fit.subject_id, trial_index): float(value)
            for fit in fits
            for trial_index, value in enumerate(fit.per_trial_nll)
        }
    )


class BuildRunConfigTests(SimpleTestCase):
    paths = {
        "trials_path": "trials.csv",
        "reference_path": "reference.csv",
        "output_dir": "runs",
    }

    def test_settings_defaults(self):
        config = build_run_config(self.paths)

        self.assertEqual(config.iterations, 5)
        self.assertEqual(config.simulations_per_class, 10)
        self.assertEqual(config.threshold, 0.05)
        self.assertIs(config.acceptance_policy, AcceptancePolicy.ALWAYS_ACCEPT)
        self.assertEqual(config.model_classes, ("wadd", "ttb", "eqw"))
        self.assertIs(config.reviser.mode, ReviserMode.LLM)
        self.assertEqual(config.reviser.max_retries, 2)

    def test_later_layers_win_and_none_is_ignored(self):
        config = build_run_config(
            self.paths, {"iterations": 3}, {"iterations": None, "seed": 7}
        )

        self.assertEqual((config.iterations, config.seed), (3, 7))

    def test_config_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "run.toml"
            path.write_text(
                'iterations = 2\nacceptance_policy = "keep_best"\n\n'
                '[reviser]\nmode = "scripted"\nscript_id = "scripts/recovery"\n',
                encoding="utf-8",
            )
            config = build_run_config(
                self.paths, {"iterations": 4}, config_path=path
            )

        self.assertEqual(config.iterations, 4)
        self.assertIs(config.acceptance_policy, AcceptancePolicy.KEEP_BEST)
        self.assertIs(config.reviser.mode, ReviserMode.SCRIPTED)
        self.assertEqual(config.reviser.endpoint_url, "http://localhost:8000/v1")

    def test_invalid_values(self):
        cases = {
            "threshold": {"threshold": 0},
            "model_classes": {"model_classes": ["wadd", "nope"]},
            "iterations": {"iterations": 0},
            "reviser.script_id": {"reviser": {"mode": "scripted"}},
            "acceptance_policy": {"acceptance_policy": "sometimes"},
        }
        for field, layer in cases.items():
            with self.subTest(field=field):
                with self.assertRaises(exceptions.ValidationError) as context:
                    build_run_config(self.paths, layer)
                self.assertIn(field, str(context.exception))

    def test_missing_config_file(self):
        with self.assertRaises(exceptions.IoError):
            build_run_config(self.paths, config_path="absent.toml")


class SimulationTests(SimpleTestCase):
    def test_record_per_iteration(self):
        """Five iterations give six records and only the last skips revision"""
        sim = run_simulation(
            sample_config(iterations=5),
            "eqw",
            0,
            dataset=sample_data(),
            reviser=ScriptedReviser([EQW, WADD, TTB]),
        )

        self.assertEqual([r.iteration_index for r in sim.records], list(range(6)))
        self.assertTrue(all(r.revision_outcome for r in sim.records[:-1]))
        self.assertIsNone(sim.records[-1].revision_outcome)
        self.assertIsNone(sim.records[-1].prompt)
        self.assertEqual(sim.records[0].model_source, EQW)
        self.assertEqual(sim.records[1].model_source, WADD)
        self.assertEqual(sim.records[2].model_source, TTB)
        self.assertEqual(sim.records[-1].next_model_source, TTB)

    def test_converged_model_is_not_revised(self):
        """An empty regret set short-circuits every iteration"""
        config = sample_config(model_classes=("wadd",), iterations=3)
        trials, _ = sample_dataset()
        dataset = Dataset(trials, self_reference(trials, "wadd", config))
        reviser = ScriptedReviser([EQW, EQW])

        sim = run_simulation(config, "wadd", 0, dataset=dataset, reviser=reviser)

        self.assertEqual(len(sim.records), 4)
        for record in sim.records:
            with self.subTest(iteration=record.iteration_index):
                self.assertTrue(record.converged)
                self.assertEqual(record.regret_size, 0)
                self.assertIsNone(record.prompt)
                self.assertEqual(record.model_source, WADD)
        self.assertEqual(reviser.calls, 0)

    def test_better_revision_lowers_mean_aic(self):
        dataset = Dataset(*generate(GeneratorSpec.default(num_subjects=10)))

        sim = run_simulation(
            sample_config(iterations=1),
            "eqw",
            0,
            dataset=dataset,
            reviser=ScriptedReviser([EQW, ADAPTIVE]),
        )

        first, last = sim.records
        self.assertTrue(first.installed)
        self.assertEqual(first.candidate_mean_aic, last.mean_aic)
        self.assertLess(last.mean_aic, first.mean_aic)
        self.assertEqual(last.model_source, ADAPTIVE)

    def test_unparseable_revision_keeps_model(self):
        sim = run_simulation(
            sample_config(iterations=1),
            "eqw",
            0,
            dataset=sample_data(),
            reviser=ScriptedReviser([EQW, "I am not sure what to change."]),
        )

        first, last = sim.records
        self.assertIs(
            first.revision_outcome.status, RevisionStatus.PARSE_FAILED_EXHAUSTED
        )
        self.assertFalse(first.installed)
        self.assertEqual(last.model_source, first.model_source)
        self.assertEqual(last.mean_aic, first.mean_aic)

    def test_garbage_from_endpoint_keeps_model(self):
        requests = []

        def handler(request):
            requests.append(request)
            return httpx.Response(
                200,
                json={
                    "id": "chatcmpl-test",
                    "object": "chat.completion",
                    "created": 0,
                    "model": "test-model",
                    "choices": [
                        {
                            "index": 0,
                            "message": {
                                "role": "assistant",
                                "content": f"guess {len(requests)}",
                            },
                            "finish_reason": "stop",
                        }
                    ],
                },
            )

        config = sample_config(iterations=1, reviser=ReviserConfig())
        reviser = LlmReviser(
            config.reviser,
            http_client=httpx.Client(transport=httpx.MockTransport(handler)),
            sleep=lambda seconds: None,
        )

        sim = run_simulation(config, "eqw", 0, dataset=sample_data(), reviser=reviser)

        outcome = sim.records[0].revision_outcome
        self.assertIs(outcome.status, RevisionStatus.PARSE_FAILED_EXHAUSTED)
        self.assertEqual(outcome.attempts, 3)
        self.assertEqual(len(requests), 3)
        self.assertEqual(sim.records[1].model_source, EQW)
        with tempfile.TemporaryDirectory() as out:
            log = write_run_log(Path(out) / RUN_LOG, config.as_dict(), [sim])
            entry = json.loads(log.read_text().splitlines()[1])
        self.assertEqual(
            entry["revision"]["raw_responses"], ["guess 1", "guess 2", "guess 3"]
        )

    def test_unfittable_revision_is_not_installed(self):
        sim = run_simulation(
            sample_config(iterations=1),
            "eqw",
            0,
            dataset=sample_data(),
            reviser=ScriptedReviser([EQW, NAN_PROGRAM]),
        )

        first, last = sim.records
        self.assertIs(first.revision_outcome.status, RevisionStatus.ACCEPTED)
        self.assertFalse(first.installed)
        self.assertTrue(first.install_error)
        self.assertIsNone(first.candidate_mean_aic)
        self.assertEqual(last.model_source, EQW)

    def test_always_accept_installs_worse_models(self):
        sim = run_simulation(
            sample_config(iterations=1),
            "eqw",
            0,
            dataset=sample_data(trials_per_subject=96),
            reviser=ScriptedReviser([EQW, UNIFORM_PROGRAM]),
        )

        first, last = sim.records
        self.assertTrue(first.installed)
        self.assertGreater(last.mean_aic, first.mean_aic)
        self.assertEqual(last.best_mean_aic, first.mean_aic)
        self.assertEqual(sim.best_record.iteration_index, 0)

    def test_keep_best_never_gets_worse(self):
        """Under keep_best the mean AIC is non-increasing for any script"""
        dataset = sample_data()
        pool = [EQW, WADD, TTB, ADAPTIVE, UNIFORM_PROGRAM, NAN_PROGRAM, "no model"]
        rng = random.Random(3)
        config = sample_config(
            iterations=5, acceptance_policy=AcceptancePolicy.KEEP_BEST, restarts=2
        )
        for case in range(5):
            script = [EQW] + [rng.choice(pool) for _ in range(5)]
            sim = run_simulation(
                config, "eqw", case, dataset=dataset, reviser=ScriptedReviser(script)
            )
            aics = [record.mean_aic for record in sim.records]
            with self.subTest(case=case, script=script):
                self.assertEqual(aics, sorted(aics, reverse=True))
                for record in sim.records[:-1]:
                    if record.installed:
                        self.assertLess(record.candidate_mean_aic, record.mean_aic)
                self.assertEqual(sim.records[-1].best_mean_aic, min(aics))

    def test_multi_proposal_lists_earlier_models(self):
        config = sample_config(
            reviser=ReviserConfig(
                mode=ReviserMode.SCRIPTED,
                script_id=str(RECOVERY_SCRIPT),
                multi_proposal=True,
            )
        )
        reviser = ScriptedReviser([EQW, WADD, TTB])

        run_simulation(
            config, "eqw", 0, dataset=sample_data(trials_per_subject=96), reviser=reviser
        )

        first, second = reviser.prompts
        self.assertNotIn("Earlier versions of the model were:", first.user_text)
        self.assertIn("Earlier versions of the model were:", second.user_text)

    def test_prompt_cap(self):
        reviser = ScriptedReviser([EQW, WADD])

        sim = run_simulation(
            sample_config(iterations=1, max_points_in_prompt=2),
            "eqw",
            0,
            dataset=sample_data(trials_per_subject=96),
            reviser=reviser,
        )

        self.assertGreater(sim.records[0].regret_size, 2)
        self.assertEqual(reviser.prompts[0].rendered_points, 2)

    def test_simulations_are_deterministic(self):
        dataset = sample_data()

        def run():
            return run_simulation(
                sample_config(),
                "eqw",
                1,
                dataset=dataset,
                reviser=ScriptedReviser([EQW, WADD, ADAPTIVE]),
            )

        first, second = run(), run()

        self.assertEqual(first.seed, derive_seed(0, "eqw", 1))
        self.assertEqual(
            [(r.model_source, r.mean_aic, r.regret_size) for r in first.records],
            [(r.model_source, r.mean_aic, r.regret_size) for r in second.records],
        )


class ExperimentTests(SimpleTestCase):
    def run_experiment(self, **params):
        config = sample_config(
            model_classes=("eqw", "ttb"), simulations_per_class=2, iterations=1, **params
        )
        return config, run_experiment(
            config,
            dataset=sample_data(),
            reviser_factory=lambda: ScriptedReviser([EQW, WADD]),
        )

    def test_every_class_and_simulation_runs(self):
        _, sims = self.run_experiment()

        self.assertEqual(
            [(sim.model_class, sim.simulation_index) for sim in sims],
            [("eqw", 0), ("eqw", 1), ("ttb", 0), ("ttb", 1)],
        )
        self.assertEqual(len({sim.seed for sim in sims}), 4)

    def test_workers_do_not_change_results(self):
        _, serial = self.run_experiment()
        _, pooled = self.run_experiment(workers=3)

        self.assertEqual(
            [[r.mean_aic for r in sim.records] for sim in serial],
            [[r.mean_aic for r in sim.records] for sim in pooled],
        )

    def test_report_files_are_byte_identical(self):
        """Two identical scripted runs write identical logs and summaries"""
        with tempfile.TemporaryDirectory() as directory:
            outputs = []
            for name in ("first", "second"):
                config, sims = self.run_experiment()
                out = Path(directory) / name
                write_experiment(sims, config.as_dict(), out)
                outputs.append(out)

            for filename in (RUN_LOG, "summary.csv", "bands.csv", "participants.csv"):
                with self.subTest(filename=filename):
                    first, second = (out / filename for out in outputs)
                    self.assertEqual(first.read_bytes(), second.read_bytes())
            self.assertTrue((outputs[0] / "models" / "eqw_0_1.msl").exists())
            self.assertEqual(
                (outputs[0] / "models" / "eqw_0_1.msl").read_text(), WADD
            )

    def test_run_log_rebuilds_the_report(self):
        config, sims = self.run_experiment()
        report = build_report(sims, config.as_dict())
        with tempfile.TemporaryDirectory() as directory:
            write_experiment(sims, config.as_dict(), directory, log_regret_points=True)
            logged_config, summaries, reference_aics = read_run_log(
                Path(directory) / RUN_LOG
            )

        rebuilt = aggregate(summaries, logged_config, reference_aics)

        self.assertEqual(logged_config["model_classes"], ["eqw", "ttb"])
        self.assertEqual(reference_aics, sims[0].reference_aics)
        pd.testing.assert_frame_equal(rebuilt.bands, report.bands)
        pd.testing.assert_frame_equal(rebuilt.participants, report.participants)
        pd.testing.assert_frame_equal(rebuilt.summary, report.summary)
        self.assertEqual(rebuilt.as_dict(), report.as_dict())

    def test_bands(self):
        _, sims = self.run_experiment()
        report = build_report(sims)
        bands = report.bands

        self.assertEqual(
            set(bands.scope), {ALL_CLASSES, "eqw", "ttb", REFERENCE_SCOPE}
        )
        self.assertTrue((bands.min_aic <= bands.mean_aic + 1e-9).all())
        self.assertTrue((bands.mean_aic <= bands.max_aic + 1e-9).all())
        overall = bands[bands.scope == ALL_CLASSES].set_index(
            ["iteration", "aggregation"]
        )
        for iteration in (0, 1):
            means = [sim.records[iteration].mean_aic for sim in sims]
            with self.subTest(iteration=iteration):
                self.assertAlmostEqual(
                    overall.loc[(iteration, "simulations"), "mean_aic"],
                    np.mean(means),
                    delta=1e-9,
                )
                self.assertAlmostEqual(
                    overall.loc[(iteration, "participants"), "mean_aic"],
                    np.mean(means),
                    delta=1e-9,
                )
                self.assertEqual(overall.loc[(iteration, "simulations"), "count"], 4)
                self.assertEqual(overall.loc[(iteration, "participants"), "count"], 12)

    def test_report_summary(self):
        _, sims = self.run_experiment()
        report = build_report(sims).as_dict()

        finals = [sim.records[-1].mean_aic for sim in sims]
        self.assertEqual(report["final"]["simulations"], 4)
        self.assertAlmostEqual(report["final"]["mean_aic"], np.mean(finals))
        self.assertAlmostEqual(report["final"]["sd_aic"], np.std(finals, ddof=1))
        self.assertEqual(
            report["best"]["mean_aic"],
            min(r.mean_aic for sim in sims for r in sim.records),
        )

    def test_reference_aic(self):
        """The reference predictor scores twice its summed NLL per subject"""
        dataset = sample_data()
        expected = [
            (subject.subject_id, 2 * dataset.reference.for_subject(subject).sum())
            for subject in dataset.trials.subjects()
        ]
        _, sims = self.run_experiment()

        for sim in sims:
            with self.subTest(simulation=(sim.model_class, sim.simulation_index)):
                self.assertEqual(
                    [subject for subject, _ in sim.reference_aics],
                    [subject for subject, _ in expected],
                )
                np.testing.assert_allclose(
                    [value for _, value in sim.reference_aics],
                    [value for _, value in expected],
                    rtol=1e-12,
                )

        report = build_report(sims)
        reference_bands = report.bands[report.bands.scope == REFERENCE_SCOPE]
        self.assertEqual(list(reference_bands.iteration), [0, 1])
        self.assertEqual(list(reference_bands["count"]), [3, 3])
        summary = report.as_dict()
        mean_reference = np.mean([value for _, value in expected])
        self.assertAlmostEqual(summary["reference"]["mean_aic"], mean_reference)
        self.assertAlmostEqual(
            summary["reference"]["final_gap"],
            summary["final"]["mean_aic"] - mean_reference,
        )

    def test_report_without_reference(self):
        _, sims = self.run_experiment()
        summaries = [row for sim in sims for row in summarize(sim)]

        report = aggregate(summaries)

        self.assertIsNone(report.as_dict()["reference"])
        self.assertNotIn(REFERENCE_SCOPE, set(report.bands.scope))

    def test_empty_report(self):
        with self.assertRaises(exceptions.ValidationError):
            aggregate([])


class RecoveryTests(SimpleTestCase):
    """
    Discovery from the equal-weighting baseline on synthetic participants
    whose ground truth is the adaptive validity model.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.spec = GeneratorSpec.default()
        cls.dataset = Dataset(*generate(cls.spec))
        cls.config = sample_config(iterations=5, restarts=5)
        cls.sim = run_simulation(
            cls.config,
            "eqw",
            0,
            dataset=cls.dataset,
            reviser=ScriptedReviser.from_directory(RECOVERY_SCRIPT),
        )
        cls.report = build_report([cls.sim])

    def test_final_model_is_the_true_family(self):
        self.assertEqual(self.sim.records[-1].model_source, ADAPTIVE)

    def test_mean_aic_reaches_oracle(self):
        """Final mean AIC is within 2 of the ground truth's mean AIC"""
        trials, reference = self.dataset.trials, self.dataset.reference
        oracle = np.mean(
            [
                aic(len(self.spec.true_params), reference.for_subject(subject).sum())
                for subject in trials.subjects()
            ]
        )

        self.assertLessEqual(self.sim.final_mean_aic, oracle + 2.0)
        self.assertLess(self.sim.final_mean_aic, self.sim.records[0].mean_aic)

    def test_regret_set_shrinks(self):
        first, last = self.sim.records[0], self.sim.records[-1]

        self.assertLessEqual(last.regret_size, 0.5 * first.regret_size)

    def test_participants_improve(self):
        participants = self.report.participants

        improved = (participants.last_aic <= participants.first_aic).mean()

        self.assertEqual(len(participants), 30)
        self.assertGreaterEqual(improved, 0.95)
