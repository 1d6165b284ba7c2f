import numpy as np
import pytest
from scipy.linalg import expm

from spin7flow import algebra as al
from spin7flow.fields import make_rng


@pytest.fixture(scope="session")
def Phi0():
    return al.standard_cayley_form()


@pytest.fixture
def rng():
    return make_rng(1234)


def random_gl_plus(rng, scale=0.3):
    """Random matrix with positive determinant, close enough to the identity to be well conditioned."""
    return expm(scale * rng.standard_normal((8, 8)))


def random_beta21(rng):
    b = rng.standard_normal((8, 8))
    b = b - b.T
    _, b21 = al.project_2form(b, al.standard_cayley_form())
    return b21


def random_form(rng, k):
    from spin7flow import tensor as tc
    return tc.antisymmetrize(rng.standard_normal((8,) * k))


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
