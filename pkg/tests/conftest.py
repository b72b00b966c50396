import numpy as np
import pytest

from mlpsd import model
from mlpsd.linalg import crandn


# identities that hold algebraically are checked at 1e-10 and tighter;
# double precision can only support that when the coherence matrix is not
# too close to singular, so test scenes cap its condition number
MAX_GAMMA_COND = 1e5


def random_scene(rng, n_mics=None, rank=None):
    """Random (g, V, gamma, B) tuple for identity and equivalence tests.

    Frequency/spacing pairs whose diffuse coherence matrix exceeds
    ``MAX_GAMMA_COND`` (the near-singular low-frequency corner) are
    redrawn.
    """
    n = int(n_mics if n_mics is not None else rng.integers(4, 9))
    t = int(rank if rank is not None else rng.integers(0, n - 1))
    t = min(t, n - 2)
    for _ in range(100):
        f = float(rng.uniform(1000.0, 6000.0))
        d = float(rng.uniform(0.05, 0.10))
        geom = model.ArrayGeometry.ula(n, d)
        gamma = model.diffuse_coherence(f, geom)
        if np.linalg.cond(gamma) < MAX_GAMMA_COND:
            break
    theta = float(rng.uniform(-1.2, 1.2))
    g = model.rdtf_ula(f, d, theta, n)
    v = np.linalg.qr(crandn(rng, n, max(t, 1)))[0][:, :t]
    b = model.blocking_matrix(g)
    return g, v, gamma, b


def random_psd(rng, size, loading=0.1):
    m = crandn(rng, size, size)
    return m @ m.conj().T + loading * np.eye(size)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
