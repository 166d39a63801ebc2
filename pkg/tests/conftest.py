import time

import numpy as np
import pytest

from pglmm import gibbs, postprocess, simdata
from pglmm.model_spec import ModelSpec, compile_data
from pglmm.priors import default_priors

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[number] = (title, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome = _CRITERIA[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")


@pytest.fixture(scope="session")
def exposure_run():
    """The exposure scenario fitted with 800 sweeps (200 burn-in) and post-processed."""
    df, truth = simdata.gen_exposure()
    spec = ModelSpec.from_dict(simdata.EXPOSURE_SPEC)
    data = compile_data(spec, df)
    priors = default_priors(spec, data)
    start = time.perf_counter()
    chain = gibbs.fit(spec, data, priors, 800, 200, seed=1, progress_every=0)
    fit = postprocess.postprocess(chain)
    seconds = time.perf_counter() - start
    return {"df": df, "truth": truth, "spec": spec, "data": data, "chain": chain,
            "fit": fit, "seconds": seconds, "lat": np.asarray(truth["Lat"])}
