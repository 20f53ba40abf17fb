"""Synthetic pH benchmark models."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParameter
from ..phcore import PHSystem

__all__ = ["generate_msd_chain", "chain_stiffness_pattern"]


def chain_stiffness_pattern(n: int) -> np.ndarray:
    """Fixed-free chain pattern ``tridiag(-1, 2, -1)`` with last diagonal 1."""
    T = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    T[-1, -1] = 1.0
    return T


def generate_msd_chain(n_masses: int, mass: float = 1.0, stiffness: float = 1.0,
                       damping: float = 0.0, x0=None) -> PHSystem:
    """Mass-spring-damper chain in position/momentum form.

    The first mass is attached to a wall and driven by the input force; each
    neighbouring pair is coupled by a spring ``stiffness`` and a damper
    ``damping``. With state ``(q, p)``::

        J = [[0, I], [-I, 0]],  D = blockdiag(0, C),  H = blockdiag(K, M^{-1})

    where ``K = stiffness * T``, ``C = damping * T`` and ``M = mass * I``.

    Parameters
    ----------
    n_masses : int
        Number of masses; the state dimension is ``2 * n_masses``.
    mass, stiffness : float
        Positive.
    damping : float
        Nonnegative.
    x0 : array_like, optional
        Initial state; zero by default.
    """
    if int(n_masses) != n_masses or n_masses < 1:
        raise InvalidParameter(f"n_masses must be a positive integer, got {n_masses}")
    if not (np.isfinite(mass) and mass > 0):
        raise InvalidParameter(f"mass must be positive, got {mass}")
    if not (np.isfinite(stiffness) and stiffness > 0):
        raise InvalidParameter(f"stiffness must be positive, got {stiffness}")
    if not (np.isfinite(damping) and damping >= 0):
        raise InvalidParameter(f"damping must be nonnegative, got {damping}")
    n = int(n_masses)
    T = chain_stiffness_pattern(n)
    I, Z = np.eye(n), np.zeros((n, n))
    J = np.block([[Z, I], [-I, Z]])
    D = np.block([[Z, Z], [Z, damping * T]])
    H = np.block([[stiffness * T, Z], [Z, I / mass]])
    B = np.zeros((2 * n, 1))
    B[n, 0] = 1.0
    return PHSystem(J, D, H, B, x0)
