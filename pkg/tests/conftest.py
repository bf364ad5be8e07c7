import numpy as np
import pytest

from clutterwhiten import build_bank, default_params


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def default_bank(params):
    return build_bank(params)


def window_from_frames(frames, y, x, params):
    """Backward-indexed (Mz, My, Mx) window anchored at (y, x) of the last
    frame of ``frames``."""
    w = np.empty((params.mz, params.my, params.mx), dtype=np.float64)
    for mz in range(params.mz):
        for my in range(params.my):
            for mx in range(params.mx):
                w[mz, my, mx] = frames[-1 - mz, y - my, x - mx]
    return w
