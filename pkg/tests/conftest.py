import numpy as np
import pytest

from topopt2d.cnn import build_network_spec, init_params, save_model
from topopt2d.pipelines import ExperimentConfig, default_problem
from topopt2d.simp import OcParams


@pytest.fixture(scope="session")
def small_problem():
    return default_problem(nelx=16, nely=8)


@pytest.fixture(scope="session")
def small_model_path(tmp_path_factory, small_problem):
    """An untrained network whose head is biased negative.

    Prediction quality is irrelevant for pipeline-mechanics tests; the bias
    keeps the clamped field from zeroing out so the OC update has signal.
    """
    spec = build_network_spec(small_problem.mesh.nely, small_problem.mesh.nelx, 1 / 16)
    params = init_params(spec, 42)
    w, b = params[-1]
    params[-1] = (w, b - 1.0)
    path = tmp_path_factory.mktemp("model") / "model.bin"
    save_model(path, spec, params)
    return str(path)


@pytest.fixture()
def small_config(small_problem, small_model_path):
    return ExperimentConfig(
        problem=small_problem,
        oc=OcParams(volume_fraction=0.5, max_iters=8),
        model_path=small_model_path,
    )
