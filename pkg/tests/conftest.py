from pathlib import Path

import numpy as np
import pytest

from latentkit import dataset as ds

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


def make_codebook(n_items=4, reversed_ids=(), subscales=None, lo=1, hi=5) -> ds.Codebook:
    items = []
    for j in range(n_items):
        iid = f"i{j + 1}"
        sub = subscales[j] if subscales else None
        items.append(ds.ItemSpec(iid, reversed=iid in reversed_ids, subscale=sub))
    return ds.Codebook(tuple(items), lo, hi)


def matrix(values, item_ids=None) -> ds.ResponseMatrix:
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    return ds.ResponseMatrix([f"r{i}" for i in range(n)], item_ids or [f"i{j + 1}" for j in range(p)], values)


_CRITERIA: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "tests": 0})
    if rep.when == "call":
        entry["tests"] += 1
    if rep.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        verdict = "PASS" if e["ok"] and e["tests"] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {e['title']}")
