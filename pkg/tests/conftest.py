import pathlib

import numpy as np
import pytest

DATA = pathlib.Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="session")
def corpus() -> str:
    return (DATA / "corpora" / "english.txt").read_text()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
