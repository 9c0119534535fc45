import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from postselect.scenario import Behaviour, GameSpec, Scenario

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CHSH_SC = Scenario(2, 2, 2, 2)


def random_behaviour(rng: np.random.Generator, sc: Scenario = CHSH_SC) -> Behaviour:
    t = rng.dirichlet(np.ones(sc.oa * sc.ob), size=sc.ma * sc.mb)
    return Behaviour(sc, t.reshape(-1))


def random_game(rng: np.random.Generator, sc: Scenario = CHSH_SC, binary: bool = False) -> GameSpec:
    mu = rng.dirichlet(np.ones(sc.ma * sc.mb))
    if binary:
        S = (rng.random(sc.size) < 0.6).astype(float)
        V = (rng.random(sc.size) < 0.5).astype(float)
        S[0] = 1.0  # keep at least one post-selected event
    else:
        S = rng.random(sc.size) * (rng.random(sc.size) < 0.8)
        V = rng.random(sc.size)
        S[0] = max(S[0], 0.1)
    return GameSpec(sc, mu, S, V, name="random")


def deterministic_behaviour(sc: Scenario, alice, bob) -> Behaviour:
    t = np.zeros(sc.shape)
    for x, a in enumerate(alice):
        for y, b in enumerate(bob):
            t[x, y, a, b] = 1.0
    return Behaviour(sc, t.reshape(-1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
