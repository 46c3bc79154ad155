import numpy as np
import pytest
import torch

from draem.imageio import save_image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.use_deterministic_algorithms(True)
    yield


def write_mvtec_tree(root, class_name="widget", n_train=3, defects=("crack", "scratch"), n_per=2, size=16,
                     seed=0):
    """Build a tiny MVTec-style tree of random images and masks."""
    rng = np.random.default_rng(seed)
    base = root / class_name
    (base / "train" / "good").mkdir(parents=True)
    for i in range(n_train):
        save_image(rng.uniform(0, 1, (size, size, 3)), base / "train" / "good" / f"{i:03d}.png")
    (base / "test" / "good").mkdir(parents=True)
    for i in range(n_per):
        save_image(rng.uniform(0, 1, (size, size, 3)), base / "test" / "good" / f"{i:03d}.png")
    for d in defects:
        (base / "test" / d).mkdir(parents=True)
        (base / "ground_truth" / d).mkdir(parents=True)
        for i in range(n_per):
            save_image(rng.uniform(0, 1, (size, size, 3)), base / "test" / d / f"{i:03d}.png")
            mask = np.zeros((size, size))
            mask[2:6, 3:9] = 1
            save_image(mask, base / "ground_truth" / d / f"{i:03d}_mask.png")
    return base


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") and item.name.startswith("test_criterion_"):
        number = item.name.split("_")[2]
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        failed = report.failed or (report.when == "call" and report.skipped)
        if failed or number not in _CRITERIA:
            _CRITERIA[number] = ("FAIL" if failed else "PASS", doc)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=int):
        status, doc = _CRITERIA[number]
        terminalreporter.write_line(f"{status} criterion {number}: {doc}")
