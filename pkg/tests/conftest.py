import numpy as np
import pytest

from greygp import kernels
from greygp.gp import Dataset, GPModel
from greygp.sweep import make_preset

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def random_model(rng, preset_name: str) -> GPModel:
    """A preset's structure with hyperparameters drawn from moderate ranges."""
    template = make_preset(preset_name).template
    values = []
    for spec in template.params:
        if spec.name == "mean":
            values.append(rng.uniform(-1, 1))
        elif spec.name == "noise_variance":
            values.append(10 ** rng.uniform(-2, -0.5))
        elif spec.name.endswith(".period"):
            values.append(rng.uniform(0.8, 2.0))
        else:
            values.append(10 ** rng.uniform(-0.3, 0.4))
    return template.model.with_params(values)


def random_dataset(rng, n: int) -> Dataset:
    X = rng.uniform(0, 3, (n, 2))
    y = np.sin(2 * X[:, 0]) * X[:, 1] + 0.1 * rng.normal(size=n)
    return Dataset(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grey_kernel():
    return kernels.product(kernels.se(0.9, (0, 1)), kernels.periodic(1.1, 1.3, 0), variance=1.7)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
