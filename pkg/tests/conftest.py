import numpy as np
import pytest
from hypothesis import settings

from elvis.synthetic import SyntheticSpec, generate_synthetic

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data():
    """Small synthetic set shared by the slower integration tests."""
    spec = SyntheticSpec(instance_count=8, images_per_instance=6, descriptor_dim=16,
                         descriptors_per_image=20, distractor_descriptor_count=20,
                         template_size=20, seed=3)
    return generate_synthetic(spec)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record a numbered acceptance outcome; the summary prints one line per criterion."""

    def record(number, ok, detail):
        _CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
