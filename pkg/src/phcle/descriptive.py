"""Masked least-squares descriptive loss and its elastic-net solver.

The loss is ``(weight / 2) * ||mask * (A - W^T U)||_F^2`` over the observed
entries only; U additionally carries an l1 penalty (lambda2) and an l2
penalty (lambda3), minimized with an accelerated proximal gradient loop.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError

LIPSCHITZ_FLOOR = 1e-12
_POWER_REL_TOL = 1e-8


def _check_shapes(A, I, W, U):
    if A.shape != I.shape:
        raise ValueError(f"assoc {A.shape} and mask {I.shape} differ in shape")
    if W.shape[0] != U.shape[0]:
        raise ValueError(f"factors disagree on dimension: W has {W.shape[0]} rows, U has {U.shape[0]}")
    if A.shape != (W.shape[1], U.shape[1]):
        raise ValueError(
            f"assoc shaped {A.shape} needs W with {A.shape[0]} columns and U with {A.shape[1]} columns"
        )


def masked_residual(A, I, W, U) -> np.ndarray:
    """``A - W^T U`` where the mask is 1, exactly 0 elsewhere.

    Unobserved entries of A never touch the arithmetic, so they may hold
    any value, including non-finite placeholders.
    """
    A = np.asarray(A, dtype=np.float64)
    I = np.asarray(I, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    _check_shapes(A, I, W, U)
    return np.where(I != 0, A - W.T @ U, 0.0)


def descriptive_objective(A, I, W, U, weight: float) -> float:
    """``(weight / 2) * ||masked residual||_F^2``."""
    R = masked_residual(A, I, W, U)
    return 0.5 * weight * float(np.sum(R * R))


def grad_W_descriptive(A, I, W, U, weight: float) -> np.ndarray:
    """Gradient of the descriptive loss in W: ``-weight * U R^T``."""
    R = masked_residual(A, I, W, U)
    return -weight * (U @ R.T)


def grad_U_smooth(A, I, W, U, weight: float) -> np.ndarray:
    """Gradient of the (smooth) descriptive loss in U: ``-weight * W R``."""
    R = masked_residual(A, I, W, U)
    return -weight * (W @ R)


def prox_elastic_net(K, tau: float, lambda2: float, lambda3: float) -> np.ndarray:
    """Closed-form minimizer of (tau/2)(u - k)^2 + (lambda3/2)u^2 + lambda2|u|.

    Applied elementwise: soft-threshold by lambda2/tau, then shrink by
    tau / (tau + lambda3).
    """
    if tau <= 0:
        raise ValueError("prox step weight tau must be positive")
    if lambda2 < 0 or lambda3 < 0:
        raise ValueError("penalty weights must be >= 0")
    K = np.asarray(K, dtype=np.float64)
    return np.sign(K) * np.maximum(tau * np.abs(K) - lambda2, 0.0) / (tau + lambda3)


def _power_max_eig(B: np.ndarray) -> float:
    # Largest eigenvalue of a symmetric PSD matrix by power iteration.
    # Deterministic seeded start; a fixed ones vector could be orthogonal
    # to the top eigenspace.
    n = B.shape[0]
    v = np.random.default_rng(0).standard_normal(n)
    norm = np.linalg.norm(v)
    if norm == 0 or n == 0:
        return 0.0
    v /= norm
    eig = 0.0
    for _ in range(100 * n + 1000):
        w = B @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
        new_eig = float(v @ (B @ v))
        if abs(new_eig - eig) <= _POWER_REL_TOL * max(abs(new_eig), LIPSCHITZ_FLOOR):
            return new_eig
        eig = new_eig
    return eig


def lipschitz_bound(W, weight: float) -> float:
    """Upper bound on the curvature of the smooth descriptive loss in U:
    ``weight * lambda_max(W W^T)``, floored at a tiny positive value so a
    step size 1/L stays finite even for an all-zero W."""
    W = np.asarray(W, dtype=np.float64)
    if weight < 0:
        raise ValueError("weight must be >= 0")
    return max(weight * _power_max_eig(W @ W.T), LIPSCHITZ_FLOOR)


def elastic_net_objective(A, I, W, U, weight, lambda2, lambda3) -> float:
    """Full subproblem value: masked misfit plus both penalties on U."""
    U = np.asarray(U, dtype=np.float64)
    return (
        descriptive_objective(A, I, W, U, weight)
        + 0.5 * lambda3 * float(np.sum(U * U))
        + lambda2 * float(np.sum(np.abs(U)))
    )


def fista_solve_U(A, I, W, U_init, hyper):
    """Minimize the descriptive loss plus elastic-net penalties over U.

    Accelerated proximal gradient with the classic momentum schedule
    t <- (1 + sqrt(1 + 4 t^2)) / 2, a fixed step 1/L from
    :func:`lipschitz_bound`, and a relative-decrease stopping rule on the
    subproblem objective (threshold ``hyper.tolerance``, budget
    ``hyper.inner_max_iter``). Returns ``(U, iterations_used, objective)``
    for the best iterate seen, so the objective never exceeds the value
    at ``U_init``.
    """
    A = np.asarray(A, dtype=np.float64)
    I = np.asarray(I, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    U_prev = np.array(U_init, dtype=np.float64, copy=True)
    _check_shapes(A, I, W, U_prev)

    weight, lambda2, lambda3 = hyper.lambda1, hyper.lambda2, hyper.lambda3
    L = lipschitz_bound(W, weight)
    Z = U_prev.copy()
    t = 1.0
    F_prev = elastic_net_objective(A, I, W, U_prev, weight, lambda2, lambda3)
    best_U, best_F = U_prev.copy(), F_prev
    iterations = 0
    for j in range(1, hyper.inner_max_iter + 1):
        step = Z - grad_U_smooth(A, I, W, Z, weight) / L
        U_new = prox_elastic_net(step, L, lambda2, lambda3)
        if not np.isfinite(U_new).all():
            raise DivergenceError(j, f"non-finite iterate at inner iteration {j}")
        iterations = j
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Z = U_new + ((t - 1.0) / t_next) * (U_new - U_prev)
        t = t_next
        F_new = elastic_net_objective(A, I, W, U_new, weight, lambda2, lambda3)
        if F_new < best_F:
            best_U, best_F = U_new.copy(), F_new
        rel_change = abs(F_prev - F_new) / max(abs(F_new), 1e-12)
        U_prev, F_prev = U_new, F_new
        if rel_change < hyper.tolerance:
            break
    return best_U, iterations, best_F
