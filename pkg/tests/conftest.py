import numpy as np
import pytest

from dce import default_schema, table4_labels_schema

from helpers import simulated_panel, small_labels_design


@pytest.fixture(scope="session")
def schema_default():
    return default_schema()


@pytest.fixture(scope="session")
def schema_labels():
    return table4_labels_schema()


@pytest.fixture(scope="session")
def design32():
    return small_labels_design(32, 4, seed=3)


@pytest.fixture(scope="session")
def panel50(design32):
    """50 respondents simulated without mixing from the published truth."""
    cfg, dataset, panel, truth = simulated_panel(design32, 50, seed=21)
    return {"cfg": cfg, "dataset": dataset, "panel": panel, "truth": truth}


@pytest.fixture(scope="session")
def mixed_panel40(design32):
    """40 respondents with normal ASC mixing, for MSL tests."""
    cfg, dataset, panel, truth = simulated_panel(
        design32, 40, seed=9, sds=(1.2, 1.0))
    return {"cfg": cfg, "dataset": dataset, "panel": panel, "truth": truth}


@pytest.fixture
def rng():
    return np.random.default_rng(0)
