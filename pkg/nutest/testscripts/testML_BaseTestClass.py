#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import copy
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from pandas.testing import assert_frame_equal

from costate_fusion.config import RunConfig

# short descent with a matching warm-up, a few hundred samples per run
SMALL_RUN = {
    "simulation": {"initial_altitude": 1500.0,
                   "initial_downrange": 1000.0,
                   "phase_boundaries": [1000.0, 400.0],
                   "max_duration": 200.0,
                   "seed": 0},
    "pipeline": {"nominal_samples": 100,
                 "costate": {"window": 30},
                 "regimes": {"warmup": 100},
                 "generator": {"refit_every": 50, "history": 400, "bootstrap_samples": 100}},
    "mpc": {"horizon": 3, "iterations": 10, "replan_every": 50},
}

SMALL_RUN_TOML = """
[simulation]
initial_altitude = 1500.0
initial_downrange = 1000.0
phase_boundaries = [1000.0, 400.0]
max_duration = 200.0

[pipeline]
nominal_samples = 100

[pipeline.costate]
window = 30

[pipeline.regimes]
warmup = 100

[pipeline.generator]
refit_every = 50
history = 400
bootstrap_samples = 100

[mpc]
horizon = 3
iterations = 10
replan_every = 50
"""


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class TestML_BaseTestClass(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = Path(tempfile.mkdtemp(prefix="costate_fusion_"))
        self.rng = np.random.default_rng(20240607)

    def tearDown(self):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def _small_config(self, **sections) -> RunConfig:
        """ short-descent configuration, sections are merged into the defaults """
        return RunConfig.model_validate(_merge(SMALL_RUN, sections))

    def _write_text(self, name, text):
        path = self.tmp_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path

    def _random_generator(self, K, low=0.1, high=2.0):
        """ valid generator in column convention with off-diagonal rates in [low, high] """
        L = self.rng.uniform(low, high, size=(K, K))
        np.fill_diagonal(L, 0.0)
        np.fill_diagonal(L, -L.sum(axis=0))
        return L

    @staticmethod
    def _assert_frame_not_equal(*args, **kwargs):
        try:
            assert_frame_equal(*args, **kwargs)
        except AssertionError:
            # frames are not equal
            pass
        else:
            # frames are equal
            raise AssertionError("DataFrames are equal when they shouldn't be.")
