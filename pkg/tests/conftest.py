import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lacerec import SyntheticFamilySpec, SyntheticTheta, build_uniform_box  # noqa: E402


@pytest.fixture(scope="session")
def box53():
    return build_uniform_box(5, 3)


@pytest.fixture(scope="session")
def synth25(box53):
    return SyntheticTheta(SyntheticFamilySpec(box53, beta0=0.01, theta=2.5))


@pytest.fixture(scope="session")
def synth3(box53):
    return SyntheticTheta(SyntheticFamilySpec(box53, beta0=0.01, theta=3.0))
