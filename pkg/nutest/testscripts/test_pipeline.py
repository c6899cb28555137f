import json
from dataclasses import replace

import numpy as np
from pandas.testing import assert_frame_equal
from testML_BaseTestClass import TestML_BaseTestClass

from costate_fusion.descent_sim import simulate_descent, write_telemetry_csv
from costate_fusion.errors import InputFormatError
from costate_fusion.pipeline import CoStatePipeline, costate_alarm, ingest_csv, run_pipeline, stream_telemetry
from costate_fusion.regimes import CORRECTIVE, HAZARD, NOMINAL

HEADER = "t,arrival_t,y_alt,y_range,y_vz\n"


class TestIngest(TestML_BaseTestClass):

    def test_reads_minimal_columns(self):
        path = self._write_text("tel.csv", HEADER + "0.0,0.0,100,120,-5\n0.1,0.1,99.5,119.6,-5\n")
        samples = ingest_csv(path)
        self.assertEqual(len(samples), 2)
        np.testing.assert_array_equal(samples[1].y, [99.5, 119.6, -5.0])
        np.testing.assert_array_equal(samples[0].accel_cmd, np.zeros(3))
        self.assertIsNone(samples[0].truth)

    def test_missing_column(self):
        path = self._write_text("tel.csv", "t,arrival_t,y_alt,y_range\n0,0,1,1\n")
        with self.assertRaises(InputFormatError) as ctx:
            ingest_csv(path)
        self.assertEqual(ctx.exception.line, 1)
        self.assertIn("y_vz", str(ctx.exception))

    def test_non_numeric_field_reports_line(self):
        path = self._write_text("tel.csv", HEADER + "0,0,1,1,1\n0.1,0.1,1,1,1\n0.2,0.2,abc,1,1\n")
        with self.assertRaises(InputFormatError) as ctx:
            ingest_csv(path)
        self.assertEqual(ctx.exception.line, 4)

    def test_arrival_checks(self):
        path = self._write_text("early.csv", HEADER + "0,0,1,1,1\n0.2,0.1,1,1,1\n")
        with self.assertRaises(InputFormatError) as ctx:
            ingest_csv(path)
        self.assertEqual(ctx.exception.line, 3)
        path = self._write_text("back.csv", HEADER + "0,0.5,1,1,1\n0.1,0.2,1,1,1\n")
        with self.assertRaises(InputFormatError):
            ingest_csv(path)

    def test_nan_measurements_are_kept(self):
        path = self._write_text("tel.csv", HEADER + "0,0,1,1,1\n0.1,0.1,nan,1,1\n0.2,0.2,,1,1\n")
        samples = ingest_csv(path)
        self.assertEqual(len(samples), 3)
        self.assertTrue(np.isnan(samples[1].y[0]))
        self.assertTrue(np.isnan(samples[2].y[0]))

    def test_empty_file(self):
        with self.assertRaises(InputFormatError):
            ingest_csv(self._write_text("empty.csv", ""))


class TestCoStateAlarm(TestML_BaseTestClass):

    def test_costate_alarm(self):
        norms = [0.0] * 40 + [10.0] * 60
        self.assertEqual(costate_alarm(norms, mu=0.0, sigma=1.0), 99.0)
        self.assertIsNone(costate_alarm(norms, mu=0.0, sigma=2.0))
        self.assertIsNone(costate_alarm([1.0] * 100, mu=1.0, sigma=0.1))


class TestCoStatePipeline(TestML_BaseTestClass):

    def setUp(self):
        super().setUp()
        self.config = self._small_config()
        self.result = simulate_descent(self.config.simulation, self.config.fault)

    def test_report_rows(self):
        pipe = stream_telemetry(self.result.samples, self.config)
        report = pipe.finalize()
        frame = report.frame()
        self.assertEqual(list(frame.columns), pipe.columns())
        self.assertEqual(len(frame), pipe.processed - 1)
        self.assertEqual(pipe.processed, len(self.result.samples))
        p = frame[["p_0", "p_1", "p_2"]].to_numpy()
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        self.assertTrue(np.all(p >= 0.0))
        self.assertTrue(np.all(frame["lyapunov_v"] >= 0.0))
        self.assertTrue(set(frame["regime"]).issubset({NOMINAL, CORRECTIVE, HAZARD}))
        warm = frame.iloc[:self.config.pipeline.nominal_samples]
        self.assertTrue(np.all(warm["mode"] == -1))
        self.assertFalse(warm["bayes_active"].any())
        self.assertTrue(pipe.warmed_up)
        self.assertTrue(pipe.clusterer.ready)
        self.assertEqual(sorted(pipe.labels), sorted([NOMINAL, CORRECTIVE, HAZARD]))

    def test_summary(self):
        summary = run_pipeline(self.result.samples, self.config).summary
        nominal = summary["nominal"]
        self.assertEqual(nominal["samples"], self.config.pipeline.nominal_samples)
        self.assertAlmostEqual(nominal["threshold"], nominal["mu"] + 6.0 * nominal["sigma"])
        self.assertEqual(summary["samples_processed"], len(self.result.samples))
        self.assertEqual(summary["skipped_samples"], 0)
        self.assertEqual(summary["dropped_late_samples"], 0)
        self.assertIsNotNone(summary["generator"])
        L = np.array(summary["generator"]["L"])
        np.testing.assert_allclose(L.sum(axis=0), 0.0, atol=1e-9)
        self.assertTrue(summary["calibration_trace"])
        self.assertGreaterEqual(summary["peak_hazard_prob"], 0.0)
        self.assertLessEqual(summary["peak_hazard_prob"], 1.0 + 1e-12)
        self.assertEqual(summary["config_echo"]["pipeline"]["nominal_samples"], 100)

    def test_correction_needs_exceeding_costate_window(self):
        always = self._small_config(pipeline={"correction": {"require_costate_excess": False}})
        self.assertTrue(run_pipeline(self.result.samples, always).frame()["bayes_active"].any())
        config = self._small_config(fault={"kind": "thrust_map_scale", "magnitude": 0.9, "onset_time": 25.0})
        frame = run_pipeline(simulate_descent(config.simulation, config.fault).samples, config).frame()
        active = frame[frame["bayes_active"]]
        self.assertFalse(active.empty)
        self.assertTrue(np.all(active["t"] > 25.0))

    def test_write_is_deterministic(self):
        first = run_pipeline(self.result.samples, self.config).write(self.tmp_dir / "a")
        second = run_pipeline(self.result.samples, self.config).write(self.tmp_dir / "b")
        for key in ("signals", "summary"):
            self.assertEqual(first[key].read_bytes(), second[key].read_bytes())
        summary = json.loads(first["summary"].read_text(encoding="utf-8"))
        self.assertIn("first_costate_alarm_t", summary)

    def test_csv_and_samples_agree(self):
        path = write_telemetry_csv(self.result.samples, self.tmp_dir / "telemetry.csv")
        from_csv = run_pipeline(path, self.config).frame()
        from_samples = run_pipeline(self.result.samples, self.config).frame()
        assert_frame_equal(from_csv, from_samples)

    def test_late_samples_match_time_ordered_run(self):
        config = self._small_config(simulation={"oosm_fraction": 0.1, "max_delay_samples": 3})
        result = simulate_descent(config.simulation, config.fault)
        late = sum(1 for s in result.samples if s.arrival_t > s.t)
        self.assertGreater(late, 0)
        shuffled = run_pipeline(result.samples, config)
        ordered = run_pipeline([replace(s, arrival_t=s.t) for s in result.in_time_order()], config)
        self.assertEqual(shuffled.summary["dropped_late_samples"], 0)
        assert_frame_equal(shuffled.frame(), ordered.frame(), check_exact=False, rtol=1e-9)

    def test_bounded_history_with_late_samples(self):
        config = self._small_config(simulation={"oosm_fraction": 0.1, "max_delay_samples": 3},
                                    pipeline={"generator": {"history": 20, "refit_every": 10}})
        result = simulate_descent(config.simulation, config.fault)
        shuffled = stream_telemetry(result.samples, config)
        ordered = stream_telemetry([replace(s, arrival_t=s.t) for s in result.in_time_order()], config)
        self.assertLessEqual(len(shuffled.history), 41)
        self.assertGreater(shuffled._history_offset, 0)
        assert_frame_equal(shuffled.finalize().frame(), ordered.finalize().frame(), check_exact=False, rtol=1e-9)

    def test_non_finite_samples_are_skipped(self):
        samples = list(self.result.samples)
        broken = replace(samples[50], y=np.array([np.nan, 1.0, 1.0]))
        samples[50] = broken
        pipe = stream_telemetry(samples, self.config)
        self.assertEqual(pipe.skipped, 1)
        self.assertEqual(pipe.processed, len(samples) - 1)

    def test_duplicate_timestamp_is_dropped(self):
        pipe = CoStatePipeline(self.config)
        for sample in self.result.samples[:30]:
            pipe.process(sample)
        pipe.process(replace(self.result.samples[20], arrival_t=self.result.samples[29].arrival_t))
        self.assertEqual(pipe.dropped, 1)
        self.assertEqual(len(pipe.rows), 29)

    def test_unsorted_arrivals_are_rejected(self):
        samples = list(self.result.samples[:10])
        samples[3], samples[4] = samples[4], samples[3]
        samples[3] = replace(samples[3], arrival_t=samples[4].arrival_t + 1.0)
        with self.assertRaises(InputFormatError):
            run_pipeline(samples, self.config)
