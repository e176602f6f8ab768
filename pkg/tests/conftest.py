import numpy as np
import pytest

from infoflow import CovarianceState, LinearSystem

# filled by test_acceptance, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


EX1_A = np.array([[0.0, 0.5, 0.5], [0.0, 0.0, 0.5], [0.0, 1.0, 0.0]])


def chain(n: int) -> np.ndarray:
    return np.eye(n, k=-1)


@pytest.fixture
def ex1():
    return LinearSystem(EX1_A, sigma=1.0), CovarianceState(0, np.eye(3))


@pytest.fixture
def ex2():
    N = 30
    B = np.zeros((N, 1))
    B[0] = 1.0
    C = np.zeros((1, N))
    C[0, -1] = 1.0
    return LinearSystem(chain(N), B=B, C=C), CovarianceState(0, np.eye(N))


@pytest.fixture
def feedback_plant():
    return LinearSystem(np.array([[4.0, 2.0], [0.0, 0.7]]), B=[1.0, 0.0], C=[-3.5, 0.0])


def random_stable(rng, n, density=1.0, radius=0.9, low=0.0):
    """Random `n`-state matrix with the given sparsity, scaled to spectral radius `radius`.

    Nonzero entries have magnitude in ``[low, 1]`` before scaling.
    """
    mag = rng.uniform(low, 1.0, size=(n, n)) * rng.choice([-1.0, 1.0], size=(n, n))
    mask = rng.random((n, n)) < density
    A = mag * mask
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    if rho > 0:
        A = A * (radius / rho)
    return A


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), size=n))
    return (Q * w) @ Q.T
