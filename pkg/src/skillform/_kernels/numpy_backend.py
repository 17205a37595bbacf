"""Vectorized numpy implementations of the hot numeric kernels.

Same call signatures as the compiled extension in ``_core.pyx``; the
package picks whichever is importable (see ``__init__``).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

_LOG2PI = np.log(2.0 * np.pi)


def translog_transition(ln_th, ln_i, a, g1, g2, g3, eta):
    """One trans-log transition over a cross-section of individuals."""
    return a + g1 * ln_th + g2 * ln_i + g3 * ln_th * ln_i + eta


def ces_parts(ln_th, ln_i, ln_g1, ln_g2, r_th, r_i):
    """Stable pieces of the CES aggregate on the log scale.

    Returns (L, share1) with L = log(g1 e^(r_th x) + g2 e^(r_i y)) and
    share1 the first term's share of the sum, both elementwise.
    """
    w1 = ln_g1 + r_th * ln_th
    w2 = ln_g2 + r_i * ln_i
    L = np.logaddexp(w1, w2)
    share1 = 1.0 / (1.0 + np.exp(w2 - w1))
    return L, share1


def ces_transition(ln_th, ln_i, ln_g1, ln_g2, r_th, r_i, outer, eta):
    """One CES transition in logs: outer * log-aggregate + shock."""
    L, _ = ces_parts(ln_th, ln_i, ln_g1, ln_g2, r_th, r_i)
    return outer * L + eta


def mixture_logpdf(y, means, chols):
    """Componentwise Gaussian log-densities.

    y: (n, D) observations; means: (K, D); chols: (K, D, D) lower Cholesky
    factors of the component covariances.  Returns (n, K).
    """
    n, D = y.shape
    K = means.shape[0]
    out = np.empty((n, K))
    for k in range(K):
        z = solve_triangular(chols[k], (y - means[k]).T, lower=True, check_finite=False)
        logdet = np.sum(np.log(np.diag(chols[k])))
        out[:, k] = -0.5 * np.einsum("dn,dn->n", z, z) - logdet - 0.5 * D * _LOG2PI
    return out
