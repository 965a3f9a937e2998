"""Allocation-free 3x3 decompositions for use inside numba kernels.

Everything works on flat scalar tuples so the hot loops never touch the heap.
Convention: svd3 returns proper rotations U, V (det = +1) with singular values
sorted descending; any reflection sign is folded into the last singular value.
"""

import numpy as np
from numba import njit

_JACOBI_SWEEPS = 8
_EPS = 1e-12


@njit(cache=True, inline="always")
def _jacobi_rot(app, aqq, apq):
    # Givens rotation annihilating apq for the symmetric 2x2 block.
    # Returns (c, s, t) with t = tan of the rotation angle.
    if abs(apq) < 1e-300:
        return 1.0, 0.0, 0.0
    tau = (aqq - app) / (2.0 * apq)
    if tau >= 0.0:
        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
    else:
        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, t * c, t


@njit(cache=True)
def eigh3(a00, a01, a02, a11, a12, a22):
    """Eigendecomposition of a symmetric 3x3 by cyclic Jacobi.

    Returns (l0, l1, l2, v00..v22) with eigenvectors in columns of v,
    unsorted.
    """
    v00 = 1.0; v01 = 0.0; v02 = 0.0
    v10 = 0.0; v11 = 1.0; v12 = 0.0
    v20 = 0.0; v21 = 0.0; v22 = 1.0
    for _ in range(_JACOBI_SWEEPS):
        off = a01 * a01 + a02 * a02 + a12 * a12
        if off < 1e-30:
            break
        # (0, 1)
        if a01 != 0.0:
            c, s, t = _jacobi_rot(a00, a11, a01)
            a00 -= t * a01
            a11 += t * a01
            a01 = 0.0
            t02 = a02
            a02 = c * t02 - s * a12
            a12 = s * t02 + c * a12
            w0 = v00; w1 = v10; w2 = v20
            v00 = c * w0 - s * v01; v01 = s * w0 + c * v01
            v10 = c * w1 - s * v11; v11 = s * w1 + c * v11
            v20 = c * w2 - s * v21; v21 = s * w2 + c * v21
        # (0, 2)
        if a02 != 0.0:
            c, s, t = _jacobi_rot(a00, a22, a02)
            a00 -= t * a02
            a22 += t * a02
            a02 = 0.0
            t01 = a01
            a01 = c * t01 - s * a12
            a12 = s * t01 + c * a12
            w0 = v00; w1 = v10; w2 = v20
            v00 = c * w0 - s * v02; v02 = s * w0 + c * v02
            v10 = c * w1 - s * v12; v12 = s * w1 + c * v12
            v20 = c * w2 - s * v22; v22 = s * w2 + c * v22
        # (1, 2)
        if a12 != 0.0:
            c, s, t = _jacobi_rot(a11, a22, a12)
            a11 -= t * a12
            a22 += t * a12
            a12 = 0.0
            t01 = a01
            a01 = c * t01 - s * a02
            a02 = s * t01 + c * a02
            w0 = v01; w1 = v11; w2 = v21
            v01 = c * w0 - s * v02; v02 = s * w0 + c * v02
            v11 = c * w1 - s * v12; v12 = s * w1 + c * v12
            v21 = c * w2 - s * v22; v22 = s * w2 + c * v22
    return a00, a11, a22, v00, v01, v02, v10, v11, v12, v20, v21, v22


@njit(cache=True)
def svd3(f00, f01, f02, f10, f11, f12, f20, f21, f22):
    """Signed SVD of a 3x3: F = U diag(s) V^T with det(U) = det(V) = +1.

    Returns (u00..u22, s0, s1, s2, v00..v22); s0 >= s1 >= |s2|.
    """
    # A = F^T F
    a00 = f00 * f00 + f10 * f10 + f20 * f20
    a01 = f00 * f01 + f10 * f11 + f20 * f21
    a02 = f00 * f02 + f10 * f12 + f20 * f22
    a11 = f01 * f01 + f11 * f11 + f21 * f21
    a12 = f01 * f02 + f11 * f12 + f21 * f22
    a22 = f02 * f02 + f12 * f12 + f22 * f22
    l0, l1, l2, v00, v01, v02, v10, v11, v12, v20, v21, v22 = eigh3(a00, a01, a02, a11, a12, a22)

    # sort eigenpairs descending
    if l0 < l1:
        l0, l1 = l1, l0
        v00, v01 = v01, v00; v10, v11 = v11, v10; v20, v21 = v21, v20
    if l1 < l2:
        l1, l2 = l2, l1
        v01, v02 = v02, v01; v11, v12 = v12, v11; v21, v22 = v22, v21
    if l0 < l1:
        l0, l1 = l1, l0
        v00, v01 = v01, v00; v10, v11 = v11, v10; v20, v21 = v21, v20

    s0 = np.sqrt(l0) if l0 > 0.0 else 0.0
    s1 = np.sqrt(l1) if l1 > 0.0 else 0.0
    s2 = np.sqrt(l2) if l2 > 0.0 else 0.0

    # det(V) -> +1 by flipping the last column
    detv = (
        v00 * (v11 * v22 - v12 * v21)
        - v01 * (v10 * v22 - v12 * v20)
        + v02 * (v10 * v21 - v11 * v20)
    )
    if detv < 0.0:
        v02 = -v02; v12 = -v12; v22 = -v22

    # U columns = F v_k / s_k, with fallbacks for tiny singular values
    u00 = f00 * v00 + f01 * v10 + f02 * v20
    u10 = f10 * v00 + f11 * v10 + f12 * v20
    u20 = f20 * v00 + f21 * v10 + f22 * v20
    if s0 > _EPS:
        inv = 1.0 / s0
        u00 *= inv; u10 *= inv; u20 *= inv
    else:
        u00 = 1.0; u10 = 0.0; u20 = 0.0

    u01 = f00 * v01 + f01 * v11 + f02 * v21
    u11 = f10 * v01 + f11 * v11 + f12 * v21
    u21 = f20 * v01 + f21 * v11 + f22 * v21
    # orthogonalize against column 0, normalize (robust to rank deficiency)
    d = u01 * u00 + u11 * u10 + u21 * u20
    u01 -= d * u00; u11 -= d * u10; u21 -= d * u20
    n1 = np.sqrt(u01 * u01 + u11 * u11 + u21 * u21)
    if n1 > _EPS and s1 > _EPS:
        inv = 1.0 / n1
        u01 *= inv; u11 *= inv; u21 *= inv
    else:
        # any unit vector orthogonal to column 0
        if abs(u00) < 0.9:
            u01 = 1.0 - u00 * u00; u11 = -u00 * u10; u21 = -u00 * u20
        else:
            u01 = -u10 * u00; u11 = 1.0 - u10 * u10; u21 = -u10 * u20
        n1 = np.sqrt(u01 * u01 + u11 * u11 + u21 * u21)
        inv = 1.0 / n1
        u01 *= inv; u11 *= inv; u21 *= inv

    # column 2 = col0 x col1 (right-handed, det(U) = +1)
    u02 = u10 * u21 - u20 * u11
    u12 = u20 * u01 - u00 * u21
    u22 = u00 * u11 - u10 * u01

    # sign of s2 absorbs any remaining reflection: F v2 = s2 u2
    fv20 = f00 * v02 + f01 * v12 + f02 * v22
    fv21 = f10 * v02 + f11 * v12 + f12 * v22
    fv22 = f20 * v02 + f21 * v12 + f22 * v22
    s2_signed = fv20 * u02 + fv21 * u12 + fv22 * u22
    if s2 > _EPS:
        s2 = s2_signed
    else:
        s2 = s2_signed  # ~0 either way

    return (u00, u01, u02, u10, u11, u12, u20, u21, u22, s0, s1, s2,
            v00, v01, v02, v10, v11, v12, v20, v21, v22)


@njit(cache=True)
def polar_r3(f00, f01, f02, f10, f11, f12, f20, f21, f22):
    """Rotation factor R = U V^T of the polar decomposition F = R S."""
    (u00, u01, u02, u10, u11, u12, u20, u21, u22, _s0, _s1, _s2,
     v00, v01, v02, v10, v11, v12, v20, v21, v22) = svd3(
        f00, f01, f02, f10, f11, f12, f20, f21, f22)
    r00 = u00 * v00 + u01 * v01 + u02 * v02
    r01 = u00 * v10 + u01 * v11 + u02 * v12
    r02 = u00 * v20 + u01 * v21 + u02 * v22
    r10 = u10 * v00 + u11 * v01 + u12 * v02
    r11 = u10 * v10 + u11 * v11 + u12 * v12
    r12 = u10 * v20 + u11 * v21 + u12 * v22
    r20 = u20 * v00 + u21 * v01 + u22 * v02
    r21 = u20 * v10 + u21 * v11 + u22 * v12
    r22 = u20 * v20 + u21 * v21 + u22 * v22
    return r00, r01, r02, r10, r11, r12, r20, r21, r22


def svd3_np(F: np.ndarray):
    """Array wrapper around svd3 for tests and non-hot callers."""
    out = svd3(F[0, 0], F[0, 1], F[0, 2], F[1, 0], F[1, 1], F[1, 2], F[2, 0], F[2, 1], F[2, 2])
    U = np.array(out[0:9]).reshape(3, 3)
    s = np.array(out[9:12])
    V = np.array(out[12:21]).reshape(3, 3)
    return U, s, V
