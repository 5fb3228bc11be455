import numpy as np
import pytest

import ssvi


@pytest.fixture(scope="session")
def coarse_spec():
    """Small d=2 dictionary shared by fast tests."""
    return ssvi.build_dictionary(2, 2.0, 1.0)


@pytest.fixture(scope="session")
def coarse_gram(coarse_spec):
    return ssvi.gram_matrix(coarse_spec)


@pytest.fixture(scope="session")
def gauss2_target():
    return ssvi.GaussianTarget(np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]]))


@pytest.fixture(scope="session")
def gauss3_target():
    cov = np.array([[1.0, 0.4, 0.3], [0.4, 1.0, 0.2], [0.3, 0.2, 1.2]])
    return ssvi.GaussianTarget(np.zeros(3), cov)


def random_admissible_params(spec, rng, scale=0.2):
    """Random parameters inside the cone with a positive diagonal."""
    lam = rng.uniform(0.0, scale, spec.p)
    free = ~spec.constrained
    lam[free] = rng.normal(0.0, 0.5 * scale, free.sum())
    alpha = rng.uniform(0.8, 1.2, spec.d)
    v = rng.normal(0.0, 0.3, spec.d)
    return ssvi.StarMapParams(alpha, lam, v)
