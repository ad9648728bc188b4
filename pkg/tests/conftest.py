import mpmath as mp
import numpy as np
import pytest

from deeprec.gd import GdConfig, gd_recover
from deeprec.model import GenConfig, ProblemDims, generate_instance
from deeprec.network import PARAM_NAMES, forward, init_random
from deeprec.trainer import backward, ls_loss

mp.mp.dps = 60


def mp_log_q(x):
    """log Q(x) in extended precision; log1p form on the left half keeps tiny tails."""
    x = mp.mpf(float(x))
    if x >= 0:
        return mp.log(mp.erfc(x / mp.sqrt(2)) / 2)
    return mp.log1p(-mp.erfc(-x / mp.sqrt(2)) / 2)


def mp_eta(x):
    x = mp.mpf(float(x))
    return -mp.npdf(x) / (mp.erfc(x / mp.sqrt(2)) / 2)


def central_diff(f, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def random_instance(seed, m=None, n=3):
    rng = np.random.default_rng(seed)
    if m is None:
        m = int(rng.integers(1, 51))
    return generate_instance(GenConfig(ProblemDims(m, n), seed=seed))


def nonneg_gd_fixture(seed, m=12, n=3):
    """Instance with nonnegative H and x in U(0.5, 1); callers still check the GD path sign."""
    rng = np.random.default_rng(seed)
    h = np.abs(rng.standard_normal((m, n)))
    cfg = GenConfig(ProblemDims(m, n), x_low=0.5, x_high=1.0, seed=seed)
    return generate_instance(cfg, h_fixed=h)


def gd_equivalence_fixtures(count, k, delta, m=12):
    """Instances whose exact GD path from zero stays elementwise nonnegative."""
    out, seed = [], 0
    while len(out) < count:
        inst = nonneg_gd_fixture(seed, m=m)
        seed += 1
        res = gd_recover(inst, GdConfig(step=delta, max_iters=k, record_trajectory=True))
        if np.all(res.x_trajectory >= 0):
            out.append((inst, res.x_hat))
    return out



def fd_gradients(net, inst, step=1e-6):
    """Central differences of ls_loss with respect to every parameter entry."""
    out = []
    for layer in net.layers:
        grads = {}
        for name in PARAM_NAMES:
            arr = getattr(layer, name)
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + step
                up = ls_loss(inst.x_true, forward(net, inst)[0])
                arr[idx] = orig - step
                down = ls_loss(inst.x_true, forward(net, inst)[0])
                arr[idx] = orig
                g[idx] = (up - down) / (2 * step)
            grads[name] = g
        out.append(grads)
    return out


def max_rel_grad_error(net, inst):
    """Worst per-array relative error ||g_fd - g_bp|| / ||g_fd|| over all parameters."""
    _, trace = forward(net, inst, keep_trace=True)
    bp = backward(net, inst, trace)
    fd = fd_gradients(net, inst)
    worst = 0.0
    for g_bp, g_fd in zip(bp, fd):
        for name in PARAM_NAMES:
            a, b = getattr(g_bp, name), g_fd[name]
            nb = np.linalg.norm(b)
            if nb == 0:
                assert np.all(a == 0)
                continue
            worst = max(worst, np.linalg.norm(a - b) / nb)
    return worst


def backprop_fixture(seed, k):
    inst = generate_instance(GenConfig(ProblemDims(8, 3), seed=seed))
    net = init_random(inst.dims, k, 0.05, seed=seed, perturb_scale=0.1)
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        layer.b1 += 0.1 * rng.standard_normal(8)
        layer.b2 += 0.2 + 0.1 * rng.standard_normal(3)
    return net, inst



@pytest.fixture
def small_instance():
    return random_instance(3, m=8)
