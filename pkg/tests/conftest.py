import numpy as np
import pytest

from bmofem.mesh import build_uniform_mesh


@pytest.fixture(scope="session")
def meshes():
    """Shared structured meshes, built once."""
    return {level: build_uniform_mesh(level) for level in range(8)}


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def sampled_csv_path():
    import pathlib

    return str(pathlib.Path(__file__).parent / "data" / "sampled_coeff.csv")
