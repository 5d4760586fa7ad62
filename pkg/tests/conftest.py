import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gpdkit.candgen import HandGeometry  # noqa: E402
from gpdkit.localgeom import CloudGeometry  # noqa: E402
from gpdkit.oracle import bundled_meshes, stereo_render  # noqa: E402


@pytest.fixture(scope="session")
def hand():
    return HandGeometry()


@pytest.fixture(scope="session")
def primitive_scenes():
    """(mesh, stereo cloud, geometry) for the bundled box, cylinder and sphere."""
    out = []
    for mesh in bundled_meshes("primitives"):
        cloud = stereo_render(mesh)
        out.append((mesh, cloud, CloudGeometry(cloud)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> one-line verdict, echoed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
