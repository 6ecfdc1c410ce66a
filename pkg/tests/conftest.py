import numpy as np
import pytest

from nomasched.model import Instance
from nomasched.scenario import ScenarioParams, generate_instance


def make_instance(gains, packet_bits=1, arrival=1, deadline=None, max_energy=1.0,
                  group_cap=None, rb_bandwidth_hz=1.0, power_level=1):
    """Small hand-built instance; scalars broadcast over devices and frames."""
    gains = np.asarray(gains, dtype=float)
    if gains.ndim == 2:
        gains = gains[:, :, None]
    m, n, k = gains.shape
    deadline = n + 1 if deadline is None else deadline
    full = lambda v, dtype: np.broadcast_to(np.asarray(v, dtype=dtype), (m, k)).copy()
    if group_cap is None:
        group_cap = min(2, m)
    return Instance(
        num_slots=n, group_cap=group_cap, rb_bandwidth_hz=rb_bandwidth_hz,
        max_energy=np.broadcast_to(np.asarray(max_energy, dtype=float), (m,)).copy(),
        power_level=np.full(m, power_level), positions=np.zeros((m, 2)),
        packet_bits=full(packet_bits, np.int64), arrival=full(arrival, np.int64),
        deadline=full(deadline, np.int64), gains=gains)


def random_instance(rng: np.random.Generator, m: int, n: int, k: int = 1, M: int = 2,
                    power_level: int = 1) -> Instance:
    """Scenario-model instance from a random seed."""
    seed = int(rng.integers(2**32))
    return generate_instance(ScenarioParams(m=m, n=n, k=k, M=min(M, m),
                                            power_level=power_level, seed=seed))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
