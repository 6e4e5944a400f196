import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from dcmm.schema import Schema  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def small_schemas(draw, max_attrs=4, max_size=6):
    m = draw(st.integers(1, max_attrs))
    sizes = draw(st.lists(st.integers(2, max_size), min_size=m, max_size=m))
    return Schema.from_sizes(sizes)


@st.composite
def subsets(draw, schema):
    mask = draw(st.lists(st.booleans(), min_size=len(schema), max_size=len(schema)))
    return tuple(i for i, b in enumerate(mask) if b)


@pytest.fixture
def worked():
    """The 2x3 example: attribute A1 of size 2, A2 of size 3."""
    from dcmm.workload import LinearQuery

    schema = Schema.from_sizes([2, 3])
    return schema, LinearQuery((0, 1), [0, 1, 1, 0, 0, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
