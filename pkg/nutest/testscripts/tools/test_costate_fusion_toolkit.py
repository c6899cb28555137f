import json

import pandas as pd
from testML_BaseTestClass import SMALL_RUN_TOML, TestML_BaseTestClass

from costate_fusion.tools import CoStateFusionToolkit
from costate_fusion.tools.descent_tools import SimulateDescent
from costate_fusion.tools.experiment_tools import CalibrateGenerator, CompareDetectors, MpcDemo
from costate_fusion.tools.pipeline_tools import RunCoStatePipeline, RunEkfBaseline

DEFAULT_NAMES = ["simulate_descent", "run_costate_pipeline", "run_ekf_baseline", "compare_detectors",
                 "calibrate_generator", "mpc_demo"]


class TestCoStateFusionToolkit(TestML_BaseTestClass):

    def test_default_tools(self):
        tools = CoStateFusionToolkit().get_tools()
        self.assertEqual([t.name for t in tools], DEFAULT_NAMES)
        self.assertFalse(any(t.return_direct for t in tools))

    def test_used_tools_filter(self):
        toolkit = CoStateFusionToolkit(used_tools=["mpc_demo", "simulate_descent", "no_such_tool"])
        self.assertEqual([t.name for t in toolkit.get_tools()], ["simulate_descent", "mpc_demo"])
        self.assertEqual([t.name for t in CoStateFusionToolkit(used_tools="run_ekf_baseline").get_tools()],
                         ["run_ekf_baseline"])
        self.assertEqual(len(CoStateFusionToolkit(used_tools="all").get_tools()), 6)

    def test_return_direct(self):
        tools = CoStateFusionToolkit(return_direct={"mpc_demo": True}).get_tools()
        self.assertEqual([t.name for t in tools if t.return_direct], ["mpc_demo"])
        self.assertTrue(all(t.return_direct for t in CoStateFusionToolkit(return_direct=True).get_tools()))

    def test_reset_and_delete(self):
        toolkit = CoStateFusionToolkit()
        toolkit.delete_tool("compare_detectors")
        self.assertNotIn("compare_detectors", [t.name for t in toolkit.get_tools()])
        self.assertEqual(len(toolkit.default_tools), 6)
        custom = RunEkfBaseline()
        toolkit.reset_tools([custom, "simulate_descent", "unknown"])
        self.assertEqual([t.name for t in toolkit.get_tools()], ["run_ekf_baseline", "simulate_descent"])
        self.assertIs(toolkit.get_tools()[0], custom)
        toolkit.reset_tools(None)
        self.assertEqual([t.name for t in toolkit.get_tools()], DEFAULT_NAMES)
        toolkit.add_custom_tool(RunCoStatePipeline())
        self.assertEqual(len(toolkit.get_tools()), 7)
        self.assertEqual(len(toolkit.default_tools), 6)

    def test_toolkit_shares_run_config(self):
        config = self._small_config()
        for tool in CoStateFusionToolkit(run_config=config).get_tools():
            self.assertIs(tool.run_config, config)


class TestDescentAndPipelineTools(TestML_BaseTestClass):

    def test_simulate_then_monitor(self):
        config = self._small_config()
        result = json.loads(SimulateDescent(run_config=config).run({"out_dir": str(self.tmp_dir), "seed": 2}))
        telemetry = self.tmp_dir / "telemetry.csv"
        self.assertEqual(result["telemetry_file"], str(telemetry))
        self.assertEqual(result["samples"], len(pd.read_csv(telemetry)))
        self.assertIsNone(result["fault_onset_t"])
        report = json.loads(RunCoStatePipeline(run_config=config).run({"telemetry_file": str(telemetry),
                                                                       "out_dir": str(self.tmp_dir / "run")}))
        self.assertEqual(report["samples_processed"], result["samples"])
        self.assertEqual(sorted(report["regimes"]), ["Corrective", "Hazard", "Nominal"])
        self.assertTrue((self.tmp_dir / "run" / "signals.csv").exists())
        ekf = json.loads(RunEkfBaseline(run_config=config).run({"telemetry_file": str(telemetry)}))
        self.assertNotIn("config_echo", ekf)
        self.assertIn("first_ekf_alarm_t", ekf)

    def test_fault_arguments_and_config_file(self):
        config_file = self._write_text("run.toml", SMALL_RUN_TOML)
        result = json.loads(SimulateDescent().run({"out_dir": str(self.tmp_dir), "config_file": str(config_file),
                                                   "fault_kind": "thrust_map_scale", "fault_magnitude": 0.8}))
        self.assertEqual(result["fault_onset_t"], 0.0)

    def test_missing_inputs(self):
        self.assertEqual(SimulateDescent()._run(seed=1), "Output directory is required")
        self.assertEqual(RunCoStatePipeline()._run(kwargs={}), "Telemetry file is required")

    def test_errors_are_returned(self):
        result = json.loads(RunCoStatePipeline().run({"telemetry_file": str(self.tmp_dir / "missing.csv")}))
        self.assertIn("error", result)
        result = json.loads(SimulateDescent().run({"out_dir": str(self.tmp_dir), "fault_kind": "gremlins"}))
        self.assertIn("ValidationError", result["error"])


class TestExperimentTools(TestML_BaseTestClass):

    def test_compare_detectors(self):
        result = json.loads(CompareDetectors(run_config=self._small_config()).run({"runs": 1, "seed": 4}))
        self.assertEqual(result["runs"], 1)
        self.assertEqual(result["nominal_runs"], 0)
        self.assertIn("costate_first", result)
        self.assertEqual(CompareDetectors()._run(seed=1), "Number of runs is required")

    def test_calibrate_generator(self):
        tool = CalibrateGenerator(run_config=self._small_config())
        result = json.loads(tool.run({"out_dir": str(self.tmp_dir)}))
        self.assertEqual(result["method"], "mle")
        self.assertEqual(len(result["L"]), 3)
        self.assertEqual(len(result["hazard_modes"]), 1)
        self.assertTrue((self.tmp_dir / "calibration.json").exists())
        short = CalibrateGenerator(run_config=self._small_config(simulation={"max_duration": 5.0}))
        self.assertIn("WarmupIncompleteError", json.loads(short.run({}))["error"])

    def test_mpc_demo(self):
        result = json.loads(MpcDemo(run_config=self._small_config()).run({"out_dir": str(self.tmp_dir / "mpc")}))
        self.assertNotIn("config_echo", result)
        self.assertGreater(result["solves"], 0)
        self.assertTrue((self.tmp_dir / "mpc" / "mpc_trace.csv").exists())
