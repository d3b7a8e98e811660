import numpy as np
import pytest

from iqccert.certify import problem_for
from iqccert.model import two_node_w
from iqccert.sdpfeas import solve_feasibility


@pytest.fixture
def rng():
    return np.random.default_rng(20190710)


@pytest.fixture(scope="session")
def cert_half():
    """Certificate for W = two_node_w(0.5), beta = 1, eta = 1."""
    lmi, _ = problem_for("dgt", two_node_w(0.5), 1.0, 1.0)
    res = solve_feasibility(lmi)
    assert res.feasible
    return res.certificate


def _random_mixing(rng, n):
    """Symmetric doubly stochastic matrix with positive entries (lazy random walk)."""
    a = rng.uniform(0.1, 1.0, (n, n))
    a = a + a.T
    # Sinkhorn scaling keeps symmetry for a symmetric start
    for _ in range(500):
        a = a / a.sum(axis=1, keepdims=True)
        a = 0.5 * (a + a.T)
    a[np.diag_indices(n)] += 1.0 - a.sum(axis=1)
    return a


@pytest.fixture
def random_mixing():
    return _random_mixing
