import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from molgen3d.selfies import default_vocabulary
from molgen3d.toydata import make_toy_corpus


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


@pytest.fixture(scope="session")
def toy_records():
    # Shared small corpus; session scope because layout is the slow part.
    return make_toy_corpus(40, seed=123)
