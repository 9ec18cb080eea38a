import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from console import set_quiet  # noqa: E402


@pytest.fixture(autouse=True)
def quiet_console():
    set_quiet(True)
    yield
    set_quiet(False)
