import numpy as np
import pytest

from tser.preprocess import EmbeddedDataset
from tser.series import SeriesCollection, TimeSeries


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(n_min, n_maj, q=3, h=2, seed=0, target="T", spread=1.0):
    """Random embedded rows: ``n_min`` from ``target`` then ``n_maj`` from two other series."""
    rng = np.random.default_rng(seed)
    n = n_min + n_maj
    Z = rng.normal(size=(n, q + h)) * spread
    ids = [target] * n_min + [("A" if i % 2 else "B") for i in range(n_maj)]
    times = list(range(n_min)) + list(range(n_maj))
    return EmbeddedDataset(Z[:, :q], Z[:, q:], np.array(ids, dtype=object), times, np.zeros(n, dtype=bool))


@pytest.fixture
def small_collection():
    return SeriesCollection(
        (
            TimeSeries("A", np.linspace(1.0, 3.0, 30)),
            TimeSeries("B", 2.0 + np.sin(np.arange(25))),
            TimeSeries("C", np.arange(1.0, 41.0)),
        ),
        horizon=2,
        frequency="daily",
    )


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Record one acceptance line: ``record(criterion, ok, detail)``."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def _record(criterion, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
