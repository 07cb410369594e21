import numpy as np
import pytest

from reluapprox.nets import ActivationKind, Net, softmax


def random_net(rng, d, n, m=1, activation=ActivationKind.SIGMA1, scale=3.0):
    return Net(rng.uniform(-scale, scale, (n, d)), rng.uniform(-scale, scale, n),
               rng.uniform(-scale, scale, (m, n)), activation)


def per_cell_softmax_error(spec, eps):
    """Cell-by-cell integral of |softmax((2m/eps)(f - 1/2))_i - f_i|.

    Independent of the closed form: each cell's softmax is evaluated
    numerically. On a class's own cell the shortfall 1 - p_i is taken as
    the sum of the other components, which avoids cancellation when p_i
    rounds to 1.
    """
    m = spec.class_count
    scale = 2.0 * m / eps
    out = np.zeros(m)
    for lo, hi, label in spec.cells():
        onehot = np.zeros(m)
        onehot[label - 1] = 1.0
        p = softmax(scale * (onehot - 0.5))
        err = p.copy()
        own = label - 1
        err[own] = np.sum(np.delete(p, own))
        out += np.prod(hi - lo) * err
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
