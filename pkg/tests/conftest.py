import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qspc.images import gaussian_beam  # noqa: E402
from qspc.model import SourceConfig, build_twin_pair  # noqa: E402


@pytest.fixture(scope="session")
def source():
    return SourceConfig()


@pytest.fixture(scope="session")
def gauss_pair(source):
    """Default 256x256 Gaussian twin pair, 3 cells per diameter."""
    return build_twin_pair(gaussian_beam(), source, 3)


@pytest.fixture(scope="session")
def small_pair(source):
    """Coarse 64x64 pair (pitch 4 DMD pixels) for fast model tests."""
    from qspc.images import DMD_PITCH_UM
    return build_twin_pair(gaussian_beam((64, 64), pitch=4 * DMD_PITCH_UM), source, 3)
