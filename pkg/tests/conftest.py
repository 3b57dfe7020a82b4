import numpy as np
import pytest
from hypothesis import settings

from xloop.data import Dataset
from xloop.model import MLPModel

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_model(m: int, rng: np.random.Generator, scale: float = 1.0) -> MLPModel:
    return MLPModel(rng.normal(0, scale, (m, m)), rng.normal(0, scale, m),
                    rng.normal(0, scale, m), float(rng.normal(0, scale)))


def make_dataset(X, y, protected=None, origin=None, name="toy") -> Dataset:
    X = np.asarray(X, dtype=float)
    m = X.shape[1]
    return Dataset(X=X, y=np.asarray(y, dtype=int), feature_names=tuple(f"x{j}" for j in range(m)),
                   feature_origin=tuple(origin or ("numerical",) * m),
                   protected=None if protected is None else np.asarray(protected), name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
