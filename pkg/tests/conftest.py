import pytest

from uiforecast.experiment import resolve_config

TINY = {"replicates": 1, "data": {"length": 900}, "forest": {"n_trees": 4},
        "fcs": {"n_imputations": 8, "iterations": 2, "forecast_iterations": 2, "d": 3}}


def tiny_config(preset=None, **over):
    raw = {"preset": preset} if preset else {"seed": 5}
    cfg = resolve_config(raw, TINY)
    return resolve_config(cfg, over) if over else cfg


@pytest.fixture
def tiny():
    return tiny_config


_RESULTS = []


@pytest.fixture(scope="session")
def criteria():
    """Collector of acceptance outcomes, echoed at the end of the run."""
    return _RESULTS


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in _RESULTS:
        terminalreporter.write_line(line)
