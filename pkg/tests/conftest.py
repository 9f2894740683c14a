import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nasforge.space import get_space  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def macro():
    return get_space("macro")


@pytest.fixture(scope="session")
def toy():
    return get_space("toy")


@pytest.fixture(scope="session")
def toy_width():
    return get_space("toy-width")
