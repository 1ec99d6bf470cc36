"""2-D rotation algebra for baseband IQ phasors.

Phasors are length-2 float arrays ``(i, q)``; 2x2 matrices are ``(2, 2)``
float arrays.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math

import numpy as np

I2 = np.eye(2)
J = np.array([[0.0, -1.0], [1.0, 0.0]])

#: Determinant floor for :func:`mat2_inverse`.
EPS_DET = 1e-14


class SingularMatrixError(ValueError):
    """Raised when a 2x2 matrix is too close to singular to invert."""

    def __init__(self, det: float):
        super().__init__(f"matrix is near-singular: det = {det:.3e} (floor {EPS_DET:g})")
        self.det = det


def phasor(i: float, q: float) -> np.ndarray:
    return np.array([float(i), float(q)])


def rot_exact(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rot_small(theta: float) -> np.ndarray:
    """First-order rotation ``I + theta*J``; only a rotation for small angles."""
    return np.array([[1.0, -theta], [theta, 1.0]])


def rotation(theta: float, small_angle: bool = False) -> np.ndarray:
    return rot_small(theta) if small_angle else rot_exact(theta)


def wrap_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]."""
    w = math.fmod(theta, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    elif w > math.pi:
        w -= 2.0 * math.pi
    return w


def angle(z) -> float:
    """Four-quadrant orientation of a phasor, in (-pi, pi].

    Raises:
        ValueError: for the zero vector, whose orientation is undefined.
    """
    i, q = float(z[0]), float(z[1])
    if i == 0.0 and q == 0.0:
        raise ValueError("orientation of the zero phasor is undefined")
    return wrap_angle(math.atan2(q, i))


def mat2_det(m) -> float:
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def mat2_inverse(m) -> np.ndarray:
    """Closed-form inverse of a 2x2 matrix.

    Raises:
        SingularMatrixError: if ``|det(m)| <= EPS_DET``.
    """
    det = mat2_det(m)
    if not abs(det) > EPS_DET:
        raise SingularMatrixError(det)
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
