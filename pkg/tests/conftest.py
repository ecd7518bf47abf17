"""
Shared fixtures: seeded generators, tiny models and throwaway experiment files
"""

import textwrap

import numpy as np
import pytest

from core.likelihoods import gaussian_likelihood
from core.models import PosteriorModel, ThetaDomain
from core.regularisers import l1_regulariser, zero_regulariser


@pytest.fixture
def rng():
    """Fixed-seed generator"""
    return np.random.default_rng(1234)


@pytest.fixture
def l1_model():
    """Denoising model on 8 coordinates: f = ||y - x||^2 / (2 * 0.5), g = ||x||_1"""
    y = np.linspace(-2.0, 2.0, 8)
    return PosteriorModel(
        likelihood=gaussian_likelihood(y, 0.5),
        regulariser=l1_regulariser((8,)),
        theta_domain=ThetaDomain(lower=[1e-3], upper=[1e3]),
        shape=(8,),
        name="l1-toy",
    )


@pytest.fixture
def flat_model():
    """g = 0 with f(x) = ||x||^2 / 2, theta pinned to 1"""
    def build(dim=4):
        return PosteriorModel(
            likelihood=gaussian_likelihood(np.zeros(dim), 1.0),
            regulariser=zero_regulariser((dim,)),
            theta_domain=ThetaDomain(lower=[1.0], upper=[1.0]),
            shape=(dim,),
            name="flat",
        )
    return build


@pytest.fixture
def experiment_file(tmp_path):
    """Write a small custom-problem experiment TOML and return its path"""
    def write(extra: str = "", name: str = "tiny.toml", sapg: str = "", header: str = ""):
        body = textwrap.dedent(f"""\
            problem = "custom"
            algorithm = "alg1"
            repetitions = 1
            master_seed = 11
            output_dir = "{(tmp_path / 'runs').as_posix()}"
            {header}

            [input]
            size = [16, 16]
            phantom_seed = 3

            [noise]
            snr_db = 25.0

            [custom]
            regulariser = "l1"

            [sapg]
            theta0 = 1.0
            theta_lower = 1e-3
            theta_upper = 1e4
            n0 = 2
            tolerance = 1e-12
            max_iters = 15
            warm_up = 5
            {sapg}

            [map]
            tol = 1e-6
            max_iters = 200

            [diagnose]
            steps = 40
            max_lag = 10
            """)
        path = tmp_path / name
        path.write_text(body + textwrap.dedent(extra))
        return path
    return write
