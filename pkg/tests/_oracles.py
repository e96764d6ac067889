"""Shared independent oracles for the test suite."""
import numpy as np

from mnn.training import msre_loss


def fd_gradient_check(model, v, target, rng, n_coords=100, eps=1e-5):
    """Compare backprop against central differences of the MSRE loss.

    Returns the worst relative discrepancy over ``n_coords`` random parameter
    coordinates, measured as ``|fd - bp| / max(|fd|, |bp|, 1e-8)``.
    """
    u, cache = model.forward_train(v)
    _, gu = msre_loss(target, u)
    grads = model.backward(cache, gu)
    params = model.parameters()
    sizes = np.array([p.size for p in params])
    flat_index = rng.choice(sizes.sum(), size=min(n_coords, sizes.sum()), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for k in flat_index:
        j = int(np.searchsorted(offsets, k, side="right") - 1)
        arr, idx = params[j].reshape(-1), k - offsets[j]
        old = arr[idx]
        arr[idx] = old + eps
        up = msre_loss(target, model(v))[0]
        arr[idx] = old - eps
        dn = msre_loss(target, model(v))[0]
        arr[idx] = old
        fd = (up - dn) / (2 * eps)
        bp = grads[j].reshape(-1)[idx]
        worst = max(worst, abs(fd - bp) / max(abs(fd), abs(bp), 1e-8))
    return worst
