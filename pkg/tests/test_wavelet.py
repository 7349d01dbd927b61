import numpy as np
import pytest

from waveprt import wavelet as wv
from waveprt.cubemap import Cubemap, luminance, solid_angle_map


def haar_basis_image(res: int, u: int, v: int) -> np.ndarray:
    """Explicit non-standard Haar basis function as a (res, res) image.

    Built straight from the definition (quadrant sign patterns with 1/S
    normalization), independent of the in-place transform implementation.
    """
    img = np.zeros((res, res))
    if u == 0 and v == 0:
        img[:, :] = 1.0 / res
        return img
    level = int(np.floor(np.log2(max(u, v))))
    size = res >> level
    bu = u - (1 << level) if u >= (1 << level) else u
    bv = v - (1 << level) if v >= (1 << level) else v
    u0, v0 = bu * size, bv * size
    uu = np.arange(res)[None, :]
    vv = np.arange(res)[:, None]
    inside = (uu >= u0) & (uu < u0 + size) & (vv >= v0) & (vv < v0 + size)
    su = np.where((uu - u0) < size // 2, 1.0, -1.0)
    sv = np.where((vv - v0) < size // 2, 1.0, -1.0)
    horiz = u >= (1 << level)
    vert = v >= (1 << level)
    if horiz and vert:
        sign = su * sv
    elif horiz:
        sign = su * np.ones_like(sv)
    else:
        sign = np.ones_like(su) * sv
    img[inside] = (sign / size)[inside]
    return img


@pytest.mark.parametrize("res", [2, 4, 8])
def test_forward_matches_materialized_basis(res):
    rng = np.random.default_rng(42)
    img = rng.standard_normal((res, res))
    got = wv.forward_array(img[None, :, :, None])[0, :, :, 0]
    for u in range(res):
        for v in range(res):
            want = float((img * haar_basis_image(res, u, v)).sum())
            assert abs(got[v, u] - want) < 1e-10, (u, v)


@pytest.mark.parametrize("res", [2, 4, 8])
def test_basis_is_orthonormal(res):
    basis = np.stack([haar_basis_image(res, u, v).ravel()
                      for v in range(res) for u in range(res)])
    gram = basis @ basis.T
    assert np.allclose(gram, np.eye(res * res), atol=1e-12)


def test_constant_face_coefficients():
    c = Cubemap.constant(1.0, face_res=2)
    w = wv.forward(c)
    for f in range(6):
        assert abs(w.coeffs[f, 0, 0, 0] - 2.0) < 1e-12
        assert np.abs(w.coeffs[f].ravel()[3:]).max() < 1e-12

    for res in (4, 16):
        k = 3.7
        w = wv.forward(Cubemap.constant(k, face_res=res))
        nz = np.abs(w.coeffs[:, :, :, 0]) > 1e-12
        assert nz.sum() == 6
        assert np.allclose(w.coeffs[:, 0, 0, :], k * res)


def test_parseval_random():
    rng = np.random.default_rng(1)
    img = rng.random((6, 64, 64, 3))
    w = wv.forward_array(img)
    for ch in range(3):
        a = (img[..., ch] ** 2).sum()
        b = (w[..., ch] ** 2).sum()
        assert abs(a - b) < 1e-5 * a


def test_linearity():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 16, 16, 3))
    y = rng.standard_normal((6, 16, 16, 3))
    lhs = wv.forward_array(2.5 * x - 1.25 * y)
    rhs = 2.5 * wv.forward_array(x) - 1.25 * wv.forward_array(y)
    assert np.abs(lhs - rhs).max() < 1e-6 * max(1.0, np.abs(rhs).max())


def test_roundtrip_identity():
    rng = np.random.default_rng(3)
    img = rng.random((6, 64, 64, 3))
    back = wv.inverse_array(wv.forward_array(img))
    rel = np.linalg.norm(back - img) / np.linalg.norm(img)
    assert rel < 1e-5

    c = Cubemap(rng.random((6, 32, 32, 3)))
    back_c = wv.inverse(wv.forward(c))
    assert np.linalg.norm(back_c.faces - c.faces) / np.linalg.norm(c.faces) < 1e-5


def test_inverse_edge_cases():
    z = wv.WaveletCoeffs(np.zeros((6, 8, 8, 3)))
    assert np.all(wv.inverse(z).faces == 0.0)

    one = np.zeros((6, 4, 4, 3))
    one[2, 0, 0, :] = 1.0
    rec = wv.inverse(wv.WaveletCoeffs(one))
    assert np.allclose(rec.faces[2], 1.0 / 4.0)
    assert np.allclose(rec.faces[[0, 1, 3, 4, 5]], 0.0)


def test_forward_rejects_non_pow2():
    with pytest.raises(ValueError):
        wv.forward_array(np.zeros((6, 6, 6, 3)))


def test_topk_constant_env_picks_scaling():
    w = wv.forward(Cubemap.constant(2.0, face_res=8))
    picked = wv.select_topk(w, 6)
    assert sorted((p.face, p.u, p.v) for p, _ in picked) == [(f, 0, 0) for f in range(6)]


def test_topk_full_energy_and_monotone():
    rng = np.random.default_rng(4)
    w = wv.WaveletCoeffs(rng.standard_normal((6, 8, 8, 3)))
    curve = wv.energy_curve(w, mode="magnitude")
    assert abs(curve[-1] - 1.0) < 1e-12
    assert np.all(np.diff(curve) >= -1e-15)
    curve_aw = wv.energy_curve(w, mode="area_weighted")
    assert abs(curve_aw[-1] - 1.0) < 1e-12


def test_topk_k_range():
    w = wv.WaveletCoeffs(np.zeros((6, 4, 4, 3)))
    with pytest.raises(ValueError):
        wv.select_topk(w, 0)
    with pytest.raises(ValueError):
        wv.select_topk(w, 6 * 16 + 1)


def test_topk_deterministic_tiebreak():
    coeffs = np.zeros((6, 4, 4, 3))  # indexed [face, v, u]
    coeffs[1, 0, 0] = 1.0
    coeffs[3, 2, 1] = 1.0  # same luminance -> tie
    coeffs[0, 1, 1] = 2.0
    w = wv.WaveletCoeffs(coeffs)
    picked = wv.select_topk(w, 3, mode="magnitude")
    keys = [(p.face, p.u, p.v) for p, _ in picked]
    assert keys[0] == (0, 1, 1)
    assert keys[1:] == [(1, 0, 0), (3, 1, 2)]


def test_support_area_scaling_and_finest():
    res = 8
    sa = solid_angle_map(res)
    full = sa.sum()
    assert np.isclose(wv.support_area(wv.WaveletIndex(0, 0, 0), res), full, rtol=1e-12)
    # finest-level detail covers a 2x2 texel patch
    idx = wv.WaveletIndex(0, res - 1, res - 1)
    patch = sa[res - 2:, res - 2:].sum()
    assert np.isclose(wv.support_area(idx, res), patch, rtol=1e-12)


def test_support_areas_tile_face_per_level():
    res = 16
    sa_map = wv.support_area_map(res)
    full = solid_angle_map(res).sum()
    for level in range(4):
        lo, hi = (1 << level), (1 << (level + 1))
        # one quadrant of details at this level tiles the face exactly
        quad = sa_map[lo:hi, 0:lo] if level > 0 else sa_map[1:2, 0:1]
        assert np.isclose(quad.sum(), full, rtol=1e-10)


def test_area_weighted_prefers_coarse():
    coeffs = np.zeros((6, 8, 8, 3))
    coeffs[0, 1, 1] = 1.0      # coarse detail, face-wide support
    coeffs[0, 7, 7] = 1.5      # finest detail, slightly larger magnitude
    w = wv.WaveletCoeffs(coeffs)
    by_mag = wv.select_topk(w, 1, mode="magnitude")[0][0]
    by_area = wv.select_topk(w, 1, mode="area_weighted")[0][0]
    assert (by_mag.u, by_mag.v) == (7, 7)
    assert (by_area.u, by_area.v) == (1, 1)


def test_max_channel_score_option():
    coeffs = np.zeros((6, 4, 4, 3))  # indexed [face, v, u]
    coeffs[0, 1, 0] = [0.0, 0.0, 1.0]   # low luminance, high max channel
    coeffs[0, 0, 1] = [0.3, 0.3, 0.3]
    w = wv.WaveletCoeffs(coeffs)
    lum_pick = wv.select_topk(w, 1, score="luminance")[0][0]
    max_pick = wv.select_topk(w, 1, score="max_channel")[0][0]
    assert (lum_pick.u, lum_pick.v) == (1, 0)
    assert (max_pick.u, max_pick.v) == (0, 1)


def test_flat_index_roundtrip():
    for flat in (0, 5, 97, 6 * 8 * 8 - 1):
        idx = wv.WaveletIndex.from_flat(flat, 8)
        assert idx.flat(8) == flat
