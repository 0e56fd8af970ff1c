import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _quiet_small_keys():
    # test keys are deliberately small
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*Paillier keys are for testing only")
        yield


def pentagon_blobs(seed: int, n: int = 500, k: int = 5, sep: float = 6.0, sigma: float = 1.0):
    """k isotropic Gaussian blobs on a regular polygon with adjacent
    centers ``sep`` standard deviations apart."""
    rng = np.random.default_rng(seed)
    radius = sep / (2 * np.sin(np.pi / k))
    angles = 2 * np.pi * np.arange(k) / k
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    labels = np.arange(n) % k
    return centers[labels] + rng.normal(scale=sigma, size=(n, 2)), labels


def minmax(x):
    lo, hi = x.min(axis=0), x.max(axis=0)
    return (x - lo) / np.where(hi > lo, hi - lo, 1.0)


@pytest.fixture(scope="session")
def key128():
    from fedpat.federated import keygen
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return keygen(128, seed=11)


@pytest.fixture(scope="session")
def key256():
    from fedpat.federated import keygen
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return keygen(256, seed=12)


# --------------------------------------------------------------------------
# one summary line per acceptance criterion

_criteria: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (report.when != "call" and not report.skipped and not report.failed):
        return
    number, title = marker.args
    status = "SKIP" if report.skipped else "FAIL" if report.failed else "PASS"
    if report.when == "call" or status != "PASS":
        _criteria[number] = (status, title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, seconds = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}  ({seconds:.1f} s)")
