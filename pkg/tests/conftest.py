import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "bdsep", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("bdsep")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("BDSEP_OUT", str(tmp_path / "out"))
    return tmp_path / "out"



def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in list(sys.modules.items())
                if name.endswith("test_acceptance") and hasattr(m, "RESULTS")), None)
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
