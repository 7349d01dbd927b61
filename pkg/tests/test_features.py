import numpy as np
import pytest

from waveprt.config import ModelConfig
from waveprt.features import FeatureField, HashGrid, fit_lowrank_sanity, make_cp_target
from waveprt.wavelet import WaveletIndex


def tiny_cfg(**kw):
    base = dict(face_res=4, levels=4, features_per_level=2, base_resolution=4,
                per_level_scale=1.5, table_size=2 ** 12, m_terms=4, feature_dim=8)
    base.update(kw)
    return ModelConfig(**base)


def test_param_count_budget():
    cfg = tiny_cfg()
    field = FeatureField(cfg, seed=0)
    lf = cfg.levels * cfg.features_per_level
    want = (cfg.levels * cfg.table_size * cfg.features_per_level
            + 6 * cfg.face_res ** 2 * cfg.m_terms
            + cfg.m_terms * cfg.feature_dim + cfg.m_terms * lf)
    assert field.param_count() == want


def test_adapter_identity_when_square():
    cfg = tiny_cfg(m_terms=8)  # levels*F = 8 == M
    field = FeatureField(cfg, seed=0)
    assert np.array_equal(field.adapter, np.eye(8))


def test_hash_corner_query_returns_stored_feature():
    rng = np.random.default_rng(0)
    grid = HashGrid(3, 2, 4, 1.5, 2 ** 10, rng)
    grid.tables = np.random.default_rng(1).standard_normal(grid.tables.shape)
    level = 1
    res = grid.resolutions[level]
    corner = np.array([1, 2, 3])
    x = (corner / res)[None, :]
    out = grid.query(x)
    idx = grid._corner_index(level, *[np.array([c]) for c in corner])
    want = grid.tables[level][idx[0]]
    got = out[0, level * 2:(level + 1) * 2]
    assert np.allclose(got, want, atol=1e-12)


def test_hash_zero_tables_zero_output():
    rng = np.random.default_rng(0)
    grid = HashGrid(4, 2, 8, 1.4, 2 ** 10, rng)
    grid.tables[...] = 0.0
    out = grid.query(np.random.default_rng(2).random((32, 3)))
    assert np.all(out == 0.0)


def test_hash_continuity_across_cells():
    rng = np.random.default_rng(3)
    grid = HashGrid(4, 2, 8, 1.5, 2 ** 12, rng)
    grid.tables = np.random.default_rng(4).standard_normal(grid.tables.shape)
    x = rng.random((64, 3)) * (1 - 2e-6)
    delta = 1e-6
    a = grid.query(x)
    b = grid.query(x + delta)
    assert np.abs(a - b).max() < 5e-3


def test_hash_clamps_with_warning():
    rng = np.random.default_rng(5)
    grid = HashGrid(2, 2, 4, 1.5, 2 ** 8, rng)
    with pytest.warns(UserWarning):
        out = grid.query(np.array([[1.5, -0.2, 0.5]]))
    ref = grid.query(np.array([[1.0, 0.0, 0.5]]))
    assert np.allclose(out, ref)


def test_hash_determinism_same_seed():
    g1 = HashGrid(4, 2, 8, 1.5, 2 ** 12, np.random.default_rng(7))
    g2 = HashGrid(4, 2, 8, 1.5, 2 ** 12, np.random.default_rng(7))
    x = np.random.default_rng(8).random((16, 3))
    assert np.array_equal(g1.query(x), g2.query(x))


def test_eval_zero_wavelet_row():
    cfg = tiny_cfg()
    field = FeatureField(cfg, seed=2)
    k = WaveletIndex(1, 2, 3)
    field.wavelet_grid[k.flat(cfg.face_res)] = 0.0
    rng = np.random.default_rng(9)
    for _ in range(4):
        h = field.eval(rng.random(3), k)
        assert np.all(h == 0.0)


def test_eval_rank1_case():
    cfg = tiny_cfg(m_terms=1, feature_dim=4)
    field = FeatureField(cfg, seed=3)
    field.feature_matrix = np.array([[1.0, 0.0, 0.0, 0.0]])
    k = WaveletIndex(0, 1, 1)
    x = np.array([0.3, 0.7, 0.2])
    s = field.grid.query(x[None, :])[0]
    want = (field.adapter @ s)[0] * field.wavelet_grid[k.flat(cfg.face_res), 0]
    h = field.eval(x, k)
    assert np.isclose(h[0], want, rtol=1e-12)
    assert np.allclose(h[1:], 0.0)


def test_eval_matches_dense_tensor_oracle():
    cfg = tiny_cfg()
    field = FeatureField(cfg, seed=4)
    field.grid.tables = np.random.default_rng(5).standard_normal(field.grid.tables.shape) * 0.3
    g = np.linspace(0.1, 0.9, 4)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    n_wav = 16
    # dense oracle: materialize H[a, k, :] one element at a time
    s_all = field.grid.query(pts)
    dense = np.zeros((len(pts), n_wav, cfg.feature_dim))
    for a in range(len(pts)):
        a_vec = field.adapter @ s_all[a]
        for k in range(n_wav):
            acc = np.zeros(cfg.feature_dim)
            for m in range(cfg.m_terms):
                acc += a_vec[m] * field.wavelet_grid[k, m] * field.feature_matrix[m]
            dense[a, k] = acc
    x_rep = np.repeat(pts, n_wav, axis=0)
    k_rep = np.tile(np.arange(n_wav), len(pts))
    got = field.eval_batch(x_rep, k_rep).reshape(len(pts), n_wav, cfg.feature_dim)
    assert np.abs(got - dense).max() < 1e-6


def test_grad_finite_differences_every_class():
    cfg = tiny_cfg()
    field = FeatureField(cfg, seed=6)
    field.grid.tables = np.random.default_rng(7).standard_normal(field.grid.tables.shape) * 0.2
    rng = np.random.default_rng(8)
    x = rng.random(3)
    k = WaveletIndex(2, 1, 0)
    up = rng.standard_normal(cfg.feature_dim)

    grads = field.grad(x, k, up)
    params = {"hash_tables": field.grid.tables, "adapter": field.adapter,
              "wavelet_grid": field.wavelet_grid, "feature_matrix": field.feature_matrix}
    h_step = 1e-3

    def loss():
        return float(field.eval(x, k) @ up)

    for name, p in params.items():
        g = grads[name]
        flat_candidates = np.flatnonzero(np.abs(g) > 1e-12)
        # include some zero-grad entries too
        check = list(rng.choice(p.size, size=min(6, p.size), replace=False))
        check += list(flat_candidates[:8])
        for fi in check:
            orig = p.flat[fi]
            p.flat[fi] = orig + h_step
            lp = loss()
            p.flat[fi] = orig - h_step
            lm = loss()
            p.flat[fi] = orig
            fd = (lp - lm) / (2 * h_step)
            scale = max(abs(fd), abs(g.flat[fi]), 1e-8)
            assert abs(fd - g.flat[fi]) / scale < 1e-3, (name, fi)


def test_grad_zero_upstream_and_locality():
    cfg = tiny_cfg()
    field = FeatureField(cfg, seed=9)
    x = np.array([0.4, 0.5, 0.6])
    k = WaveletIndex(0, 2, 2)
    grads = field.grad(x, k, np.zeros(cfg.feature_dim))
    for g in grads.values():
        assert np.all(g == 0.0)

    grads = field.grad(x, k, np.ones(cfg.feature_dim))
    gw = grads["wavelet_grid"]
    nz_rows = np.flatnonzero(np.abs(gw).sum(axis=1))
    assert list(nz_rows) == [k.flat(cfg.face_res)]


def test_bilinearity_in_w_and_u():
    cfg = tiny_cfg()
    field = FeatureField(cfg, seed=10)
    x = np.array([[0.2, 0.8, 0.5]])
    kf = np.array([7])
    h0 = field.eval_batch(x, kf).copy()
    field.wavelet_grid *= 3.0
    h3 = field.eval_batch(x, kf)
    assert np.allclose(h3, 3.0 * h0, rtol=1e-12)
    field.feature_matrix *= -0.5
    h4 = field.eval_batch(x, kf)
    assert np.allclose(h4, -1.5 * h0, rtol=1e-12)


def fit_cfg():
    return ModelConfig(face_res=2, levels=4, features_per_level=2, base_resolution=4,
                       per_level_scale=1.5, table_size=2 ** 11, m_terms=4, feature_dim=6)


@pytest.mark.slow
def test_fit_rank1_target():
    pts, target = make_cp_target(4, 16, 6, rank=1, seed=0)
    _, rel = fit_lowrank_sanity(pts, target, fit_cfg(), steps=2500, lr=2e-2, seed=1)
    assert rel < 1e-3


@pytest.mark.slow
def test_fit_rank_m_target():
    pts, target = make_cp_target(4, 16, 6, rank=4, seed=2)
    _, rel = fit_lowrank_sanity(pts, target, fit_cfg(), steps=2500, lr=2e-2, seed=3)
    assert rel < 1e-2


@pytest.mark.slow
def test_fit_overcomplete_target_floor_logged():
    pts, target = make_cp_target(4, 16, 6, rank=12, seed=4)
    _, rel = fit_lowrank_sanity(pts, target, fit_cfg(), steps=1200, lr=2e-2, seed=5)
    print(f"rank-(M+8) fit floor: rel={rel:.4f}")  # documented, not asserted
    assert np.isfinite(rel)
