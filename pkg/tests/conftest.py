import numpy as np
import pytest

from energy_fs.ingest import ingest_all
from energy_fs.registry import Registry, default_registry_text
from energy_fs.synth import generate_synthetic


def build_store(root, households, days, seed=7):
    raw, store = root / "raw", root / "store"
    generate_synthetic(households, days, seed, raw)
    ingest_all([raw / "consumption.csv"], raw / "weather.csv", raw / "metadata.csv", store)
    (store / "registry.txt").write_text(default_registry_text())
    return store


@pytest.fixture(scope="session")
def small_store(tmp_path_factory):
    """Four households, twenty days."""
    return build_store(tmp_path_factory.mktemp("small"), 4, 20)


@pytest.fixture()
def small_registry(small_store):
    return Registry.from_text(default_registry_text(), small_store)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
