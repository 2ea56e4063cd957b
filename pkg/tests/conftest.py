import pytest

import pgv.syntax as S


@pytest.fixture(autouse=True)
def _fresh_names():
    """Reset the fresh-name counter so printed names (and hence goldens)
    are stable no matter which subset of tests runs."""
    S.reset_fresh()
    yield
