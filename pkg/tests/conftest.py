from pathlib import Path

import numpy as np
import pytest

from scenario_builders import CombSpec, build_controlled_combs, build_switch, build_twin
from tensor_core import haar_unitary

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def random_combs(rng, n_agents: int, n_combs: int, target_dim: int = 2, memory_dim: int = 1) -> list[CombSpec]:
    d = target_dim * memory_dim
    perms = [rng.permutation(n_agents) for _ in range(n_combs)]
    return [CombSpec(tuple(p), tuple(haar_unitary(d, rng) for _ in range(n_agents + 1)), memory_dim) for p in perms]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def haar_pair(rng):
    return haar_unitary(2, rng), haar_unitary(2, rng)


@pytest.fixture
def switch(haar_pair):
    return build_switch(*haar_pair)


@pytest.fixture
def twin(rng):
    return build_twin(haar_unitary(2, rng), haar_unitary(2, rng), haar_unitary(4, rng))


@pytest.fixture
def combs_builder(rng):
    combs = random_combs(rng, 3, 2)
    return build_controlled_combs(combs, [haar_unitary(2, rng) for _ in range(3)])
