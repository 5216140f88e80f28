import numpy as np
import pytest

from trsim.se3 import Transform

# (criterion number, passed, detail) tuples filled in by test_acceptance.py.
ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {criterion}: {status} - {detail}")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_transform(rng: np.random.Generator, trans_range: float = 10.0,
                     max_angle: float | None = None) -> Transform:
    if max_angle is None:
        R = random_rotation(rng)
    else:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.0, max_angle)
        from trsim.se3 import exp_map, Twist
        R = exp_map(Twist(np.zeros(3), axis * angle)).rotation
    t = rng.uniform(-trans_range, trans_range, size=3)
    return Transform(R, t)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
