import numpy as np
import pytest

from spikebasin.kernel import gaussian_kernel, sigma_from_k
from spikebasin.measurement import FourierOperator, apply, draw_random_operator
from spikebasin.objective import Objective
from spikebasin.spike_model import ModelConfig, SpikeTrain, sample_theta

CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, msg = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {msg}")


@pytest.fixture
def record_criterion():
    def record(n: int, ok: bool, msg: str):
        CRITERIA[n] = (bool(ok), msg)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {msg}")
        return ok

    return record


def single_frequency_operator(omega, weight=1.0):
    """m = 1 operator with the given frequency vector."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    return FourierOperator(omega[None, :], [weight])


def random_objective(seed, k=2, d=1, m=128, sigma=0.4, epsilon=0.3, R=1.0):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(k, d, epsilon, R)
    op = draw_random_operator(m, gaussian_kernel(sigma), d, int(rng.integers(2**31)))
    theta = sample_theta(cfg, (0.5, 1.5), int(rng.integers(2**31)), random_sign=True, strict_interior=True)
    other = sample_theta(cfg, (0.5, 1.5), int(rng.integers(2**31)), random_sign=True, strict_interior=True)
    return Objective(op, apply(op, other), cfg), theta


@pytest.fixture
def small_problem():
    return random_objective(0)


class AcceptanceSetup:
    """m = 2e4, k = 2, d = 1, Gaussian sigma_2 at unit separation."""

    M = 20_000
    RIP_TRIALS = 1000

    def __init__(self):
        from spikebasin.certificates import beta_max_noiseless, estimate_constants
        from spikebasin.measurement import compute_D_A_R

        self.config = ModelConfig(2, 1, 1.0, 2.0)
        self.kernel = gaussian_kernel(sigma_from_k(2))
        self.operator = draw_random_operator(self.M, self.kernel, 1, rng_seed=2024)
        self.truth = SpikeTrain([1.0, 1.5], [[-0.6], [0.7]], self.config)
        self.objective = Objective(self.operator, apply(self.operator, self.truth), self.config)
        self.rip = estimate_constants(self.operator, self.config, self.kernel, self.RIP_TRIALS, rng_seed=7)
        self.D = compute_D_A_R(self.operator)
        self.certificate = beta_max_noiseless(self.truth, self.rip, self.kernel, self.D, self.M)


@pytest.fixture(scope="session")
def acceptance_setup():
    return AcceptanceSetup()
