import numpy as np
import pytest

from patternspectra import bloch, modulation
from patternspectra.field2d import Grid2D, PeriodicField
from patternspectra.model import brusselator, brusselator_state, cgl_pair
from patternspectra.profile import solve_profile, turing_square_seed, wave_derivatives

MU_B = (3 + np.sqrt(5)) / 2          # critical |k|^2 of the a=1, b=5 Brusselator
KAPPA_B = np.sqrt(0.9 * MU_B) / (2 * np.pi)
KAPPA_CGL = 0.5 / (2 * np.pi)


@pytest.fixture(scope="session")
def brusselator_wave():
    sys_ = brusselator(1.0, 5.0)
    K = KAPPA_B * np.eye(2)
    seed = turing_square_seed(sys_, Grid2D(16), brusselator_state(), K, 0.5)
    return solve_profile(sys_, K, seed)


@pytest.fixture(scope="session")
def advective_wave(brusselator_wave):
    """Brusselator with gamma = (0.2, 0.2), reached by continuation in gamma."""
    wd = brusselator_wave
    for g in (0.05, 0.1, 0.2):
        wd = solve_profile(brusselator(1.0, 5.0, (g, g)), wd.K, wd.U, c_seed=wd.c)
    return wave_derivatives(wd)


@pytest.fixture(scope="session")
def cgl_wave():
    g = 0.2
    sys_ = cgl_pair(1.0, g)
    K = KAPPA_CGL * np.eye(2)
    grid = Grid2D(8)
    r = np.sqrt((1 - 0.25) / (1 + g))
    x1, x2 = grid.x
    seed = PeriodicField.from_values(grid, np.stack([
        1.1 * r * np.cos(2 * np.pi * x1), r * np.sin(2 * np.pi * x1) + 0.01 * np.cos(2 * np.pi * x2),
        r * np.cos(2 * np.pi * x2), r * np.sin(2 * np.pi * x2)]))
    return wave_derivatives(solve_profile(sys_, K, seed))


@pytest.fixture(scope="session")
def cgl_modulation(cgl_wave):
    exp = bloch.expand_symbol(cgl_wave)
    Lam = modulation.lambda_coeffs(cgl_wave)
    ms = modulation.from_expansion(exp, Lam, cgl_wave.K)
    modulation.build_lambda0(ms)
    return ms
