import numpy as np
import pytest

from ferrosim.galerkin import GalerkinState, PhysicalParams
from ferrosim.noise import NoiseModel, make_family
from ferrosim.spectral import SpectralField

TWO_PI3 = (2.0 * np.pi) ** 3
PI3 = np.pi**3


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_fields(k_max, count, rng, space=None, batch=False):
    """Batch of random real fields, coefficients (count, 3, n, n, n)."""
    fields = [SpectralField.random(k_max, rng, space=space) for _ in range(count)]
    if batch:
        return np.stack([f.coeffs for f in fields])
    return fields


def div_consistent_pair(k_max, rng, mu0=1.0):
    """(M, H) pair with div(M + H) = 0, built through the shared-gradient state."""
    st = GalerkinState.random(k_max, rng, mu0=mu0)
    _, _, m, h, _ = st.reconstruct_fields(mu0)
    return SpectralField(m, k_max), SpectralField(h, k_max)


def default_noise(k_max=1):
    return NoiseModel(
        k_max,
        {
            "velocity": make_family("velocity", k_max, [((1, 0, 0), (1, 0, 0), 0.3, "sin")]),
            "rotation": make_family("rotation", k_max, [((0, 0, 0), (0, 0.4, 0), 1.0)]),
            "magnetization": make_family("magnetization", k_max, [((1, 0, 0), (0, 0, 1), 0.3)]),
            "field": make_family("field", k_max, [((0, 1, 0), (1, 0, 0), 0.3)]),
        },
    )


def stable_params(**overrides):
    base = dict(
        nu=1.5, lambda1=1.2, lambda2=0.5, lam=0.4, tau=1.0,
        chi0=0.3, sigma=1.0, mu0=1.0, alpha=0.2,
    )
    base.update(overrides)
    return PhysicalParams(**base)
