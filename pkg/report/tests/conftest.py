"""Fixture runs for the renderer tests.

The run directories are produced once per session with the simulation
package; the renderer under test never imports it and sees only the
artifacts on disk.
"""
import pytest

from rodflow import config as C
from rodflow import harness as H

SWEEP_RAW = {
    "mode": "sweep_de1",
    "particles": {"n_list": [27, 64, 256, 1024]},
    "realizations": 32,
    "sde": {"dt": 4e-3, "t_end": 0.25},
    "checkpoints": [0.25],
    "test_functions": {"phi": {"t1": 0.25}, "psi": {"t1": 0.25}},
    "l_max": 8,
}

FP_RAW = {
    "mode": "fokker_planck",
    "h": {"kind": "constant_b", "b": [0, 0, 2.0]},
    "fp": {"dt": 1e-3, "t_end": 0.5},
    "checkpoints": [0.1, 0.5],
    "l_max": 10,
}

COMPARE_RAW = {
    "mode": "compare_fields",
    "particles": {"n_list": [64]},
    "realizations": 2,
    "h": {"kind": "constant_b", "b": [0, 0, 2.0]},
    "sde": {"dt": 4e-3, "t_end": 0.25},
    "test_functions": {"phi": {"rx": 0.8, "x0": [0.15, 0.0, -0.1], "t1": 0.25, "profile": "poly8"}},
    "grid": {"nodes_per_axis": 6, "half_extent": 0.5},
    "l_max": 8,
}

SMALL_DE_RAW = {
    "mode": "sweep_small_de",
    "particles": {"n_list": [400]},
    "h": {"kind": "constant_b", "b": [0, 0, 2.0]},
    "sde": {"dt": 5e-5, "t_end": 0.1, "scaling": "small_deborah"},
    "phi_n_list": [0.02],
    "averaging_window": [0.04, 0.1],
    "l_max": 10,
}


@pytest.fixture(scope="session")
def runs_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    for raw in (SWEEP_RAW, FP_RAW, dict(FP_RAW, resistance="sphere", seed=1), COMPARE_RAW, SMALL_DE_RAW):
        H.execute(C.validate(raw), str(root))
    return root
