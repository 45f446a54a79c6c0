from __future__ import annotations

import numpy as np
import pytest

from noisyauth.channel import DMC
from noisyauth.setauth import setup

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[num])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_instance():
    """W1=BSC(0.05), W2=BSC(0.25), v1=2^20, n'=400, eps=1/16."""
    return setup(DMC.bsc(0.05), DMC.bsc(0.25), 2 ** 20, 400, eps_override=1 / 16,
                 rng=np.random.default_rng(20240501))


@pytest.fixture(scope="session")
def small_instance():
    """phi=2 with an explicit (64, 49152) set system that is verified exhaustively."""
    return setup(DMC.bsc(0.05), DMC.bsc(0.25), 64, 400, beta2=0.01, eps_override=0.5,
                 rng=np.random.default_rng(7))


@pytest.fixture(scope="session")
def direct_instance():
    """phi=0 instance: four source states sent directly as codewords."""
    return setup(DMC.bsc(0.05), DMC.bsc(0.25), 4, 100, rng=np.random.default_rng(11))


def hand_instance(W1, W2, v1, blocks, codebook, n_prime=None):
    """phi=2 instance with an explicit level-1 system and a given codebook."""
    from noisyauth.channel import choose_anchor, hull_distance
    from noisyauth.codes import ChannelCode
    from noisyauth.setauth import ProtocolInstance, ceil_sqrt
    from noisyauth.setsys import Schedule, SetSystem

    code = ChannelCode.from_codebook(codebook, W1.input_size)
    n_prime = code.n_prime if n_prime is None else n_prime
    S = SetSystem(v1, blocks)
    sched = Schedule(2, (v1, S.b), 0.5, 0.01, 0.01, n_prime)
    a, g = choose_anchor(W1, W2)
    w = hull_distance(W1.row(a), W2.matrix).weights
    return ProtocolInstance(W1, W2, sched, (S,), code, a, g, ceil_sqrt(n_prime), n_prime, w)
