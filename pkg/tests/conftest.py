"""Shared fixtures: shapes are expensive to build, so cache per session."""

import numpy as np
import pytest

from volsym import shapes, volume


@pytest.fixture(scope="session")
def ball48():
    return volume.represent(shapes.gen_primitive("ball", {"radius": 1.0}, 48), 0.0)


@pytest.fixture(scope="session")
def ball128():
    return volume.represent(shapes.gen_primitive("ball", {"radius": 1.0}, 128), 0.0)


@pytest.fixture(scope="session")
def box48():
    vol = shapes.gen_primitive("box", {"half_extents": (1.0, 2.0, 3.0)}, 48)
    return volume.represent(vol, 0.0)


@pytest.fixture(scope="session")
def box64():
    vol = shapes.gen_primitive("box", {"half_extents": (1.0, 2.0, 3.0)}, 64)
    return volume.represent(vol, 0.0)


@pytest.fixture(scope="session")
def box128():
    vol = shapes.gen_primitive("box", {"half_extents": (1.0, 2.0, 3.0)}, 128)
    return volume.represent(vol, 0.0)


@pytest.fixture(scope="session")
def cylinder48():
    vol = shapes.gen_primitive("cylinder", {"radius": 1.0, "half_height": 1.5}, 48)
    return volume.represent(vol, 0.0)


@pytest.fixture(scope="session")
def icosa64():
    return volume.represent(shapes.gen_primitive("icosahedron", {}, 64), 0.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
