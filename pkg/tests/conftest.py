import numpy as np
import pytest

from beamdelay.config import config_from_dict, preset
from beamdelay.control import place_poles
from beamdelay.model import assemble
from beamdelay.spectral import BeamParams

# Gains printed with the reference numerical example (four decimals).
PRINTED_K_LEFT = np.array([[-1.7614, 0.0276, 11.8714, -0.0360], [0.0, 0.0, 0.0, 0.0]])
PRINTED_K_BOTH = np.array([[2.0076, 0.4186, 5.0313, 0.1129], [1.9972, 0.4278, -4.5575, -0.0178]])
TARGET_POLES = [-5.0, -6.0, -7.0, -8.0]


@pytest.fixture(scope="session")
def sec6():
    return BeamParams(alpha=1.5, beta0=50.0, gamma=50.0)


@pytest.fixture(scope="session")
def sec6_model(sec6):
    return assemble(sec6, 2)


@pytest.fixture(scope="session")
def gain_both(sec6_model):
    return place_poles(sec6_model, "both", TARGET_POLES)


@pytest.fixture(scope="session")
def gain_left(sec6_model):
    return place_poles(sec6_model, "left", TARGET_POLES)


@pytest.fixture(scope="session")
def sec6_config():
    return config_from_dict(preset("paper-sec6"))


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and report.when == "call":
        label = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _ACCEPTANCE.append((label, "PASS" if report.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {label}" + (f"  [{detail}]" if detail else ""))
