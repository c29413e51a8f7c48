import math

import pytest

from drachma.model import TWO_PI, StateBranch, TrialFunction, load_bundled

KAPPA = TWO_PI * 564.7e3
CHI = TWO_PI * 299e3


@pytest.fixture(scope="session")
def qubit_cfg():
    return load_bundled("paper_qubit.json")


@pytest.fixture(scope="session")
def qutrit_cfg():
    return load_bundled("paper_qutrit.json")


@pytest.fixture
def linear_qubit():
    return [StateBranch(0, CHI), StateBranch(1, -CHI)]


@pytest.fixture
def trial_1us():
    return TrialFunction(1.0, 3, 1e-6)


def rel_err(a, b):
    return abs(a - b) / abs(b)


__all__ = ["KAPPA", "CHI", "rel_err", "math"]
