import pytest

from config import PRESET_REPRESENTATIONS
from genotype import HierarchySpec, IdCounter


@pytest.fixture
def hierarchical_spec():
    return HierarchySpec.from_dict(PRESET_REPRESENTATIONS["hierarchical"])


@pytest.fixture
def flat_spec():
    return HierarchySpec.from_dict(PRESET_REPRESENTATIONS["flat"])


@pytest.fixture
def ids():
    return IdCounter()
