import dataclasses

import numpy as np
import pytest

from roomcomp import config, pipeline
from roomcomp.roomsim import Omni, ReceiverSpec, RoomSpec, SourceSpec

FS = 44100


def delta(n, k=0, amp=1.0):
    x = np.zeros(n)
    x[k] = amp
    return x


@pytest.fixture(scope="session")
def short_room():
    """Default-size room truncated to 0.25 s of reflections for quick tests."""
    return RoomSpec.uniform((7.4, 4.6, 2.6), 0.3, max_reflection_time_s=0.25)


@pytest.fixture(scope="session")
def omni_pair():
    return (SourceSpec((1.2, 1.1, 1.2), 0.0, Omni()),
            ReceiverSpec((3.7, 2.815, 1.2)))


@pytest.fixture(scope="session")
def default_cfg():
    return config.default_config()


@pytest.fixture(scope="session")
def default_irs(default_cfg):
    return pipeline.simulate_all(default_cfg)


@pytest.fixture(scope="session")
def default_results(default_cfg, default_irs):
    return {ch: pipeline.run_channel(default_cfg, ch, default_irs)
            for ch in default_cfg.channels}


@pytest.fixture(scope="session")
def fast_cfg():
    """Default layout with a short reflection tail and fewer taps."""
    cfg = config.default_config()
    room = dataclasses.replace(cfg.room, max_reflection_time_s=0.3)
    return dataclasses.replace(cfg, room=room)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
