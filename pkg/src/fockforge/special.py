"""Associated Laguerre polynomials and log-factorial helpers."""

import numpy as np
from scipy.special import gammaln


def log_factorial(n):
    """``log(n!)`` via the log-gamma function (safe far beyond n = 170)."""
    return gammaln(np.asarray(n, dtype=float) + 1.0)


def genlaguerre_table(p_max, q, x):
    """Evaluate ``L_p^q(x)`` for ``p = 0..p_max`` by forward recurrence.

    Uses ``(p+1) L_{p+1}^q = (2p+q+1-x) L_p^q - (p+q) L_{p-1}^q``.

    Parameters
    ----------
    p_max : int
        highest degree returned
    q : array_like
        order(s); broadcast against ``x``
    x : array_like
        evaluation point(s)

    Returns
    -------
    numpy.ndarray
        shape ``(p_max + 1,) + broadcast(q, x).shape``
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = np.broadcast(q, x).shape
    out = np.empty((p_max + 1,) + shape)
    out[0] = 1.0
    if p_max >= 1:
        out[1] = q + 1.0 - x
    for p in range(1, p_max):
        out[p + 1] = ((2 * p + q + 1.0 - x) * out[p] - (p + q) * out[p - 1]) / (p + 1)
    return out
