import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fields import corpus  # noqa: E402


@pytest.fixture(scope="session")
def grids():
    """The shared synthetic corpus, built once per session."""
    return corpus()
