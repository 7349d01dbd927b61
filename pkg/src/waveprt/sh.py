"""Real spherical harmonics up to degree 4, evaluated as Cartesian polynomials.

Component order is the usual l*(l+1)+m flattening, 25 values for l <= 4.
Inputs are assumed unit length.
"""

from __future__ import annotations

import numpy as np

SH_DEGREE = 4
SH_COUNT = (SH_DEGREE + 1) ** 2  # 25


def eval_sh(d: np.ndarray) -> np.ndarray:
    """Evaluate the 25 real SH basis functions; d (..., 3) -> (..., 25)."""
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    x2, y2, z2 = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (SH_COUNT,), dtype=np.float64)
    out[..., 0] = 0.28209479177387814
    out[..., 1] = -0.4886025119029199 * y
    out[..., 2] = 0.4886025119029199 * z
    out[..., 3] = -0.4886025119029199 * x
    out[..., 4] = 1.0925484305920792 * x * y
    out[..., 5] = -1.0925484305920792 * y * z
    out[..., 6] = 0.31539156525252005 * (2.0 * z2 - x2 - y2)
    out[..., 7] = -1.0925484305920792 * x * z
    out[..., 8] = 0.5462742152960396 * (x2 - y2)
    out[..., 9] = -0.5900435899266435 * y * (3.0 * x2 - y2)
    out[..., 10] = 2.890611442640554 * x * y * z
    out[..., 11] = -0.4570457994644658 * y * (4.0 * z2 - x2 - y2)
    out[..., 12] = 0.3731763325901154 * z * (2.0 * z2 - 3.0 * x2 - 3.0 * y2)
    out[..., 13] = -0.4570457994644658 * x * (4.0 * z2 - x2 - y2)
    out[..., 14] = 1.445305721320277 * z * (x2 - y2)
    out[..., 15] = -0.5900435899266435 * x * (x2 - 3.0 * y2)
    out[..., 16] = 2.5033429417967046 * x * y * (x2 - y2)
    out[..., 17] = -1.7701307697799304 * y * z * (3.0 * x2 - y2)
    out[..., 18] = 0.9461746957575601 * x * y * (7.0 * z2 - 1.0)
    out[..., 19] = -0.6690465435572892 * y * z * (7.0 * z2 - 3.0)
    out[..., 20] = 0.10578554691520431 * (35.0 * z2 * z2 - 30.0 * z2 + 3.0)
    out[..., 21] = -0.6690465435572892 * x * z * (7.0 * z2 - 3.0)
    out[..., 22] = 0.47308734787878004 * (x2 - y2) * (7.0 * z2 - 1.0)
    out[..., 23] = -1.7701307697799304 * x * z * (x2 - 3.0 * y2)
    out[..., 24] = 0.6258357354491761 * (x2 * (x2 - 3.0 * y2) - y2 * (3.0 * x2 - y2))
    return out
