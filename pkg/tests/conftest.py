import math

import numpy as np
import pytest

from anosov_lab.family import Constant, Periodic
from anosov_lab.multiplicative import PeriodicSeq, build_multiplicative
from anosov_lab.splitting import SplittingField, extract_splitting, splitting_from_multiplicative
from anosov_lab.torus import TorusDiffeo, perturbed_cat, translation_pert

PHI = (1 + math.sqrt(5)) / 2
LAM_S = (3 - math.sqrt(5)) / 2
LAM_U = (3 + math.sqrt(5)) / 2


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# closed-form cat eigendirections, independent of linear_splitting
CAT_ES = unit([1.0, -PHI])
CAT_EU = unit([PHI, 1.0])


@pytest.fixture(scope="session")
def cat():
    return Constant(TorusDiffeo.cat())


@pytest.fixture(scope="session")
def identity_family():
    return Constant(TorusDiffeo.identity())


@pytest.fixture(scope="session")
def cat_split():
    return SplittingField.constant(CAT_ES, CAT_EU)


@pytest.fixture(scope="session")
def pcat():
    return Constant(perturbed_cat(0.01))


@pytest.fixture(scope="session")
def pcat_split(pcat, cat_split):
    return extract_splitting(pcat, cat_split, n_iter=20, grid_n=64)


@pytest.fixture(scope="session")
def translated_cat():
    return Constant(TorusDiffeo(TorusDiffeo.cat().linear, translation_pert((0.01, 0.0))))


@pytest.fixture(scope="session")
def fibonacci():
    fam, data = build_multiplicative(PeriodicSeq((1,)))
    return fam, data, splitting_from_multiplicative(data)


@pytest.fixture(scope="session")
def shear_pair():
    """The two generators, alternating; its product over a period is the cat map."""
    return Periodic([TorusDiffeo([[1, 0], [1, 1]]), TorusDiffeo([[1, 1], [0, 1]])])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
