"""Relational loss on co-occurrence counts.

With scores ``X = C^T W`` the loss treats each count ``D[c, w]`` as
successes out of ``Q[c, w]`` logistic trials:

    sum over (c, w) of  -D[c, w] * X[c, w] + Q[c, w] * softplus(X[c, w])

which is minimized where the expected counts ``Q * sigmoid(X)`` equal the
observed ones. All functions take plain float arrays in the shared
orientation (D, Q: contexts x labels; C, W: dim x count).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) computed without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _check_pair_shapes(D, Q, C, W):
    if D.shape != Q.shape:
        raise ValueError(f"counts {D.shape} and bound {Q.shape} differ in shape")
    if C.shape[0] != W.shape[0]:
        raise ValueError(f"factors disagree on dimension: C has {C.shape[0]} rows, W has {W.shape[0]}")
    if D.shape != (C.shape[1], W.shape[1]):
        raise ValueError(
            f"counts shaped {D.shape} need C with {D.shape[0]} columns and W with {D.shape[1]} columns"
        )


def _as_arrays(D, Q, C, W, *, check_finite):
    mats = tuple(np.asarray(m, dtype=np.float64) for m in (D, Q, C, W))
    _check_pair_shapes(*mats)
    if check_finite:
        for name, m in zip("DQCW", mats):
            if not np.isfinite(m).all():
                raise ValueError(f"{name} contains non-finite entries")
    return mats


def emf_objective(D, Q, C, W) -> float:
    """Value of the relational loss at the current factors."""
    D, Q, C, W = _as_arrays(D, Q, C, W, check_finite=True)
    X = C.T @ W
    return float(np.sum(-D * X + Q * softplus(X)))


def expected_cooccurrence(Q, C, W) -> np.ndarray:
    """Expected counts ``Q * sigmoid(C^T W)`` under the current factors."""
    Q = np.asarray(Q, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if Q.shape != (C.shape[1], W.shape[1]) or C.shape[0] != W.shape[0]:
        raise ValueError(
            f"bound shaped {Q.shape} needs C with {Q.shape[0]} columns and W with {Q.shape[1]} columns"
        )
    return Q * expit(C.T @ W)


def grad_C(D, Q, C, W) -> np.ndarray:
    """Gradient of the relational loss in C: ``W (E - D)^T``, dim x contexts."""
    D, Q, C, W = _as_arrays(D, Q, C, W, check_finite=False)
    E = expected_cooccurrence(Q, C, W)
    return W @ (E - D).T


def grad_W_relational(D, Q, C, W) -> np.ndarray:
    """Gradient of the relational loss in W: ``C (E - D)``, dim x labels."""
    D, Q, C, W = _as_arrays(D, Q, C, W, check_finite=False)
    E = expected_cooccurrence(Q, C, W)
    return C @ (E - D)
