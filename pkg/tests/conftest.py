import time

import numpy as np
import pytest

from dataflow_sca import default_models, generate_dataset
from dataflow_sca.preprocess import PreprocessConfig

DESK_WINDOW = 4096
DESK_LOADING = 8192


@pytest.fixture(scope="session")
def small_ds():
    """8 configs x 30 traces, desk-scale window; quick enough for unit tests."""
    return generate_dataset(default_models(11), 30)


@pytest.fixture(scope="session")
def desk_ds():
    """The default synthetic database: 8 configs x 200 traces, seed 0."""
    return generate_dataset(default_models(0), 200)


@pytest.fixture
def desk_cfg():
    return PreprocessConfig(DESK_WINDOW, DESK_LOADING, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


DESK_RF_GRID = dict(classifier_kind="rf", n_comp_values=(4, 8, 12, 20, 40), rf_estimators=(100,),
                    rf_min_split=(5,))


def _desk_runs(ds, space):
    from dataflow_sca.pipeline import evaluate, prepare
    out = {"seconds": {}}
    for n in (1, 4):
        t0 = time.perf_counter()
        trained = prepare(ds, space, PreprocessConfig(DESK_WINDOW, DESK_LOADING, n))
        out[n] = trained
        out[f"report{n}"] = evaluate(trained, ds)
        out["seconds"][n] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def desk_rf(desk_ds):
    """RF(PCA) prepared and evaluated on the desk database at n_average 1 and 4."""
    from dataflow_sca.pipeline import GridSearchSpace
    return _desk_runs(desk_ds, GridSearchSpace(**DESK_RF_GRID))


@pytest.fixture(scope="session")
def desk_knn(desk_ds):
    """k-NN(PCA) with the full default grid, at n_average 1 and 4."""
    from dataflow_sca.pipeline import GridSearchSpace
    return _desk_runs(desk_ds, GridSearchSpace())


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
