from pathlib import Path

import numpy as np
import pytest

from bayesknn.cli import TOY_SCHEMA
from bayesknn.data import load_csv, load_ripley, ripley_paths

TARGET_I = np.array([0.6, 0.5])
TARGET_II = np.array([0.42, 0.6])


def toy_path() -> Path:
    return ripley_paths()[0].parent / "toy_two_class.csv"


@pytest.fixture(scope="session")
def toy():
    return load_csv(toy_path(), TOY_SCHEMA)


@pytest.fixture(scope="session")
def ripley():
    return load_ripley()
