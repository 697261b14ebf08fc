import numpy as np
import pytest

from relfuse.binning import default_direction_codebook, default_rotation_codebook


@pytest.fixture(scope="session")
def rot_table():
    return default_rotation_codebook()


@pytest.fixture(scope="session")
def dir_table():
    return default_direction_codebook()


def one_hot(n, i):
    p = np.zeros(n)
    p[i] = 1.0
    return p
