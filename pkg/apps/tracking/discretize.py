"""
Discrete-time error model by van Loan's method.

One augmented exponential

    D = expm([[-A, B S B^T], [0, A^T]] T) = [[D11, D12], [0, D22]]

gives the transition ``Phi = D22^T`` and the process noise ``Q = Phi D12``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray


@dataclass(frozen=True)
class DiscreteModel:
    phi: NDArray[np.float64]
    Q: NDArray[np.float64]
    T: float


def symmetrize(M: NDArray[np.float64]) -> NDArray[np.float64]:
    return 0.5 * (M + M.T)


def expm(M: ArrayLike) -> NDArray[np.float64]:
    """Matrix exponential (scaling and squaring with a degree-13 Pade approximant)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("expm input has non-finite entries")
    return scipy.linalg.expm(M)


def van_loan(
    A: ArrayLike,
    B: ArrayLike,
    sigma: ArrayLike,
    T: float,
    walk: Optional[ArrayLike] = None,
) -> DiscreteModel:
    """
    ``walk`` holds optional random-walk intensities (variance per second) added to the
    diagonal of ``Q``; a zero entry leaves that state exactly as the continuous model has it.
    """
    if T <= 0.0:
        raise ValueError(f"sampling time must be positive, got {T}")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]

    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = B @ np.asarray(sigma, dtype=float) @ B.T
    M[n:, n:] = A.T
    D = expm(M * T)

    phi = D[n:, n:].T
    Q = symmetrize(phi @ D[:n, n:])
    if walk is not None:
        Q = Q + np.diag(np.asarray(walk, dtype=float) * T)
    return DiscreteModel(phi=phi, Q=Q, T=T)
