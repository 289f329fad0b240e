"""Central finite-difference gradient oracle used across the test suite.

Deliberately independent of the autodiff implementation: the function
under test is re-evaluated at perturbed numpy inputs, nothing else.
"""

import numpy as np

H_DEFAULT = 1e-5


def central_fd_grads(f, arrays, h=H_DEFAULT):
    """Gradient of scalar ``f(*arrays)`` w.r.t. each array, by central differences.

    ``arrays`` are mutated in place during probing and restored afterwards.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            fp = f(*arrays)
            a[idx] = orig - h
            fm = f(*arrays)
            a[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric, floor=1e-3):
    """Max elementwise |a-n| / max(|a|, |n|, floor).

    The floor keeps near-zero entries from amplifying finite-difference
    round-off; test losses are scaled so true gradients are O(1).
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom))
