import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import random_soup, separated_strip

from hrpp import build_bvh


@pytest.fixture(scope="session")
def eight_leaf_bvh():
    """15-node, depth-3 tree over eight separated triangles (one per leaf)."""
    return build_bvh(separated_strip(8), max_leaf_size=1)


@pytest.fixture(scope="session")
def soup_bvh():
    tris = random_soup(256, seed=7)
    return tris, build_bvh(tris, max_leaf_size=4)
