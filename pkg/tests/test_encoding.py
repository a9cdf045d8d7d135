import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralfield.encoding import (
    EncodingConfig, HashLevel, LatentGrid, build_encoder, ge_encode, hash_slots, locate_cell,
    lpe_backward, lpe_encode, multigrid_encode, multihash_encode, param_count, pe_encode)
from neuralfield.errors import ConfigError, DomainError
from neuralfield.numerics import Rng, check_gradient


def random_grid(d, n_cells, coeffs, seed=0, dtype=np.float64, scale=1.0):
    rng = np.random.default_rng(seed)
    data = rng.uniform(-scale, scale, ((n_cells + 1) ** d, coeffs)).astype(dtype)
    return LatentGrid(d, n_cells, data)


def corner_sum_oracle(x, grid):
    """Interpolate one point by looping over the 2^d corners explicitly."""
    d, n = grid.input_dim, grid.resolution
    z = [min(int(math.floor(x[k] * n)), n - 1) for k in range(d)]
    xl = [x[k] * n - z[k] for k in range(d)]
    out = np.zeros(grid.coeffs_per_vertex)
    for bits in itertools.product((0, 1), repeat=d):
        w = 1.0
        flat = 0
        for k, b in enumerate(bits):
            w *= xl[k] if b else 1 - xl[k]
            flat += (z[k] + b) * (n + 1) ** k
        out += w * grid.data[flat]
    return out


def lpe_oracle(x, grid, n_freq, shared=False):
    """Scalar LPE: interpolate coefficients, then modulate per axis."""
    a = corner_sum_oracle(x, grid)
    d, res = grid.input_dim, grid.resolution
    out = []
    for k in range(d):
        z = min(int(math.floor(x[k] * res)), res - 1)
        xl = x[k] * res - z
        if shared:
            block = a[k * n_freq:(k + 1) * n_freq]
            out += [block[0], block[0]]
            for i in range(1, n_freq):
                out += [block[i] * math.cos(2 ** i * math.pi * xl), block[i] * math.sin(2 ** i * math.pi * xl)]
        else:
            block = a[k * 2 * n_freq:(k + 1) * 2 * n_freq]
            out += [block[0], block[1]]
            for i in range(1, n_freq):
                out += [block[2 * i] * math.cos(2 ** i * math.pi * xl),
                        block[2 * i + 1] * math.sin(2 ** i * math.pi * xl)]
    return np.array(out)


# -- locate_cell ---------------------------------------------------------------


def test_locate_origin():
    loc = locate_cell([0.0], 4)
    assert loc.z[0, 0] == 0 and loc.local[0, 0] == 0.0
    np.testing.assert_array_equal(loc.corner_weights[0], [1.0, 0.0])


def test_locate_clamps_upper_edge():
    loc = locate_cell([1.0], 4)
    assert loc.z[0, 0] == 3 and loc.local[0, 0] == 1.0
    np.testing.assert_array_equal(loc.corner_weights[0], [0.0, 1.0])


def test_locate_2d_quarter_weights():
    loc = locate_cell([0.75, 0.25], 2)
    np.testing.assert_array_equal(loc.z[0], [1, 0])
    np.testing.assert_allclose(loc.local[0], [0.5, 0.5])
    np.testing.assert_allclose(loc.corner_weights[0], [0.25] * 4)


@pytest.mark.parametrize("bad", [[-0.01], [1.5], [float("nan")]])
def test_locate_rejects_outside_domain(bad):
    with pytest.raises(DomainError):
        locate_cell(bad, 4)


@given(st.integers(1, 3), st.integers(1, 16), st.data())
@settings(max_examples=60, deadline=None)
def test_locate_invariants(d, n, data):
    x = np.array(data.draw(st.lists(st.floats(0, 1), min_size=d, max_size=d)))
    loc = locate_cell(x, n)
    assert np.all((loc.z >= 0) & (loc.z <= n - 1))
    assert np.all((loc.local >= 0) & (loc.local <= 1))
    assert np.all((loc.corner_weights >= 0) & (loc.corner_weights <= 1))
    assert abs(loc.corner_weights.sum() - 1) < 1e-12


# -- positional encoding -------------------------------------------------------


def test_pe_at_zero():
    np.testing.assert_allclose(pe_encode([0.0], 2)[0], [1, 0, 1, 0])


def test_pe_at_half():
    np.testing.assert_allclose(pe_encode([0.5], 2)[0], [0, 1, -1, 0], atol=1e-12)


def test_pe_layout_per_axis():
    out = pe_encode([0.0, 0.5], 2)[0]
    np.testing.assert_allclose(out, [1, 0, 1, 0, 0, 1, -1, 0], atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pe_offset_aliasing(n):
    xs = np.array([[0.05], [0.30], [0.55], [0.80]])
    enc = pe_encode(xs, n, offset=3)
    for a, b in itertools.combinations(range(4), 2):
        assert np.max(np.abs(enc[a] - enc[b])) <= 1e-6


def test_pe_without_offset_is_unique():
    enc = pe_encode(np.array([[0.05], [0.30], [0.55], [0.80]]), 2)
    assert np.max(np.abs(enc[0] - enc[1])) > 0.1


def test_pe_bounded(np_rng):
    enc = pe_encode(np_rng.uniform(size=(100, 3)), 6)
    assert enc.shape == (100, 36) and np.all(np.abs(enc) <= 1)


# -- grid encoding -------------------------------------------------------------


def test_ge_constant_grid():
    grid = LatentGrid(2, 3, np.tile([0.3, -1.2, 5.0], (16, 1)))
    out = ge_encode(np.random.default_rng(1).uniform(size=(20, 2)), grid)
    np.testing.assert_allclose(out, np.tile([0.3, -1.2, 5.0], (20, 1)), atol=1e-12)


def test_ge_linear_1d():
    grid = LatentGrid(1, 1, np.array([[0.0], [1.0]]))
    assert ge_encode([0.25], grid)[0, 0] == pytest.approx(0.25)


@pytest.mark.parametrize("d,n", [(1, 5), (2, 4), (3, 3)])
def test_ge_matches_corner_sum(d, n, np_rng):
    grid = random_grid(d, n, 4, seed=d, dtype=np.float32)
    xs = np_rng.uniform(size=(50, d))
    got = ge_encode(xs, grid)
    want = np.array([corner_sum_oracle(x, grid) for x in xs])
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_ge_shape_mismatch():
    grid = random_grid(2, 2, 3)
    with pytest.raises(ConfigError):
        ge_encode([0.5, 0.5], grid, feature_width=4)
    with pytest.raises(ConfigError):
        ge_encode([0.5], grid)


# -- local positional encoding -------------------------------------------------


def test_lpe_zero_coefficients():
    grid = LatentGrid.zeros(2, 4, 2 * 2 * 3, dtype=np.float64)
    out = lpe_encode(np.random.default_rng(2).uniform(size=(10, 2)), grid, 3)
    assert out.shape == (10, 12) and np.all(out == 0)


def test_lpe_hand_example():
    grid = LatentGrid(1, 2, np.ones((3, 4)))
    np.testing.assert_allclose(lpe_encode([0.25], grid, 2)[0], [1, 1, -1, 0], atol=1e-12)


@pytest.mark.parametrize("d,n_cells,n,shared", [(1, 2, 2, False), (2, 4, 3, False), (3, 2, 2, False),
                                                (2, 3, 4, True), (3, 2, 3, True)])
def test_lpe_matches_scalar_oracle(d, n_cells, n, shared, np_rng):
    coeffs = d * (n if shared else 2 * n)
    grid = random_grid(d, n_cells, coeffs, seed=n)
    xs = np_rng.uniform(size=(40, d))
    got = lpe_encode(xs, grid, n, shared_sin_cos=shared)
    want = np.array([lpe_oracle(x, grid, n, shared) for x in xs])
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_lpe_shape_mismatch():
    with pytest.raises(ConfigError):
        lpe_encode([0.5, 0.5], random_grid(2, 2, 10), 3)


def face_points(rng, d, n_cells, count):
    """Random points on interior cell faces; returns points and the crossing axis."""
    x = rng.uniform(0.05, 0.95, size=(count, d))
    axis = rng.integers(0, d, size=count)
    face = rng.integers(1, n_cells, size=count) / n_cells
    x[np.arange(count), axis] = face
    return x, axis


def two_sided_gap(x, axis, eps, encode):
    lo, hi = x.copy(), x.copy()
    lo[np.arange(len(x)), axis] -= eps
    hi[np.arange(len(x)), axis] += eps
    return np.max(np.abs(encode(lo) - encode(hi)), axis=1)


def test_lpe_continuous_across_faces(np_rng):
    grid = random_grid(2, 4, 2 * 2 * 2, seed=3, dtype=np.float32)
    x, axis = face_points(np_rng, 2, 4, 1000)
    gap = two_sided_gap(x.astype(np.float32), axis, np.float32(1e-6), lambda p: lpe_encode(p, grid, 2))
    assert np.max(gap) <= 1e-4


def test_lpe_local_lipschitz_bound(np_rng):
    grid = random_grid(1, 4, 4, seed=4)
    x, axis = face_points(np_rng, 1, 4, 50)
    eps = 1e-6
    gap = two_sided_gap(x, axis, eps, lambda p: lpe_encode(p, grid, 2))
    # measured slope at a larger step bounds the small-step gap
    k = two_sided_gap(x, axis, 1e-3, lambda p: lpe_encode(p, grid, 2)) / 2e-3
    assert np.all(gap <= 2 * eps * (k * 1.01 + 1e-6))


def test_raw_modulated_encoding_jumps_at_faces(np_rng):
    grid = random_grid(2, 4, 8, seed=5)
    x, axis = face_points(np_rng, 2, 4, 200)
    gap = two_sided_gap(x, axis, 1e-6, lambda p: lpe_encode(p, grid, 2, keep_lowest_frequency=True))
    assert np.median(gap) > 0.1


def test_lpe_backward_zero_upstream():
    grid = random_grid(2, 2, 8)
    g = lpe_backward(np.full((3, 2), 0.4), grid, 2, np.zeros((3, 8)))
    assert g.shape == grid.data.shape and np.all(g == 0)


def test_lpe_backward_boundary_weights():
    grid = random_grid(1, 1, 6)
    up = np.array([[0.5, -1.0, 2.0, 3.0, -4.0, 1.5]])
    g = lpe_backward([0.0], grid, 3, up)
    np.testing.assert_allclose(g[0], [0.5, -1.0, 2.0, 0.0, -4.0, 0.0], atol=1e-12)
    np.testing.assert_array_equal(g[1], 0)


@pytest.mark.parametrize("seed", range(6))
def test_lpe_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    n_cells = int(rng.choice([2, 4]))
    n = int(rng.choice([2, 3]))
    shared = bool(seed % 2)
    coeffs = d * (n if shared else 2 * n)
    grid = random_grid(d, n_cells, coeffs, seed=seed + 10)
    xs = rng.uniform(size=(7, d))
    probe = rng.standard_normal((7, 2 * n * d))

    def f(flat):
        g = LatentGrid(d, n_cells, flat.reshape(grid.data.shape))
        value = float(np.sum(lpe_encode(xs, g, n, shared) * probe))
        return value, lpe_backward(xs, g, n, probe, shared).ravel()

    assert check_gradient(f, grid.data.ravel(), 1e-5) <= 1e-6


def test_shared_coefficients_halve_storage():
    for d in (1, 2, 3):
        full = EncodingConfig("LPE", d, frequencies=4, grid_res=8)
        half = EncodingConfig("LPE", d, frequencies=4, grid_res=8, shared_sin_cos=True)
        assert param_count(full) == 2 * param_count(half)
        assert full.coeffs_per_vertex == 2 * half.coeffs_per_vertex


# -- multi-resolution ------------------------------------------------------------


def test_multigrid_single_level_is_ge(np_rng):
    grid = random_grid(2, 5, 3)
    xs = np_rng.uniform(size=(10, 2))
    np.testing.assert_array_equal(multigrid_encode(xs, [grid]), ge_encode(xs, grid))


def test_multigrid_constants():
    a = LatentGrid(1, 2, np.full((3, 1), 2.0))
    b = LatentGrid(1, 4, np.full((5, 1), -7.0))
    np.testing.assert_allclose(multigrid_encode([0.3], [a, b])[0], [2.0, -7.0])


def test_multigrid_output_width():
    cfg = EncodingConfig("MultiGrid", 3, feature_width=2, levels=(16, 32, 64))
    assert cfg.output_dim() == 6
    enc = build_encoder(cfg, Rng(1))
    assert enc(np.full((1, 3), 0.3)).shape == (1, 6)


def test_multigrid_requires_levels():
    with pytest.raises(ConfigError):
        multigrid_encode([0.5], [])
    with pytest.raises(ConfigError):
        EncodingConfig("MultiGrid", 3)


def test_hash_dense_fallback_equals_ge(np_rng):
    data = np_rng.standard_normal((5 ** 2, 2))
    level = HashLevel(2, 4, 64, data)
    assert level.dense
    xs = np_rng.uniform(size=(30, 2))
    np.testing.assert_array_equal(multihash_encode(xs, [level]), ge_encode(xs, LatentGrid(2, 4, data)))


def test_hash_collision_shares_slot():
    t, n = 64, 16
    coords = np.array(list(itertools.product(range(n + 1), repeat=2)))
    slots = hash_slots(coords, t)
    # brute-force a colliding pair of vertices
    seen = {}
    pair = None
    for c, s in zip(coords, slots):
        if s in seen:
            pair = (seen[s], c)
            break
        seen[s] = c
    assert pair is not None
    level = HashLevel(2, n, t, np.zeros((t, 1)))
    assert not level.dense
    va, vb = (np.asarray(p, float) / n for p in pair)
    before = multihash_encode(np.stack([va, vb]), [level]).copy()
    level.data[slots[np.flatnonzero((coords == pair[0]).all(axis=1))[0]]] += 1.0
    after = multihash_encode(np.stack([va, vb]), [level])
    np.testing.assert_allclose(after - before, [[1.0], [1.0]])


def test_hash_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        EncodingConfig("MultiHash", 3, levels=(16,), hash_table_size=1000)
    with pytest.raises(ConfigError):
        multihash_encode([0.5, 0.5], [HashLevel(2, 4, 12, np.zeros((12, 1)))])


def test_hash_budget_arithmetic():
    cfg = EncodingConfig("MultiHash", 3, feature_width=2, levels=(16, 32, 64, 128), hash_table_size=2 ** 17)
    enc = build_encoder(cfg)
    assert [lv.data.shape[0] for lv in enc.levels] == [4913, 35937, 131072, 131072]
    assert [lv.dense for lv in enc.levels] == [True, True, False, False]
    assert param_count(cfg) == 605_988


# -- parameter counts ------------------------------------------------------------


@pytest.mark.parametrize("cfg,expected", [
    (EncodingConfig("PE", 2, frequencies=4), 0),
    (EncodingConfig("LPE", 2, frequencies=4, grid_res=64), 67_600),
    (EncodingConfig("MultiGrid", 3, feature_width=2, levels=(16, 32, 64)), 630_950),
    (EncodingConfig("LPE", 3, frequencies=3, grid_res=32), 646_866),
    (EncodingConfig("GE", 2, grid_res=64, feature_width=16), 67_600),
])
def test_param_count(cfg, expected):
    assert param_count(cfg) == expected
    assert sum(p.size for p in build_encoder(cfg).params) == expected


@pytest.mark.parametrize("cfg", [
    EncodingConfig("GE", 2, grid_res=3, feature_width=4),
    EncodingConfig("MultiGrid", 3, feature_width=2, levels=(2, 3)),
    EncodingConfig("MultiHash", 3, feature_width=2, levels=(2, 6), hash_table_size=64),
])
def test_grid_encoders_linear_in_parameters(cfg, np_rng):
    a = build_encoder(cfg, Rng(1), dtype=np.float64, init_scale=1.0)
    b = build_encoder(cfg, Rng(2), dtype=np.float64, init_scale=1.0)
    mix = build_encoder(cfg, Rng(3), dtype=np.float64)
    alpha, beta = 0.7, -1.3
    for pm, pa, pb in zip(mix.params, a.params, b.params):
        pm[...] = alpha * pa + beta * pb
    xs = np_rng.uniform(size=(25, cfg.input_dim))
    np.testing.assert_allclose(mix(xs), alpha * a(xs) + beta * b(xs), atol=1e-5)


@pytest.mark.parametrize("cfg", [
    EncodingConfig("GE", 2, grid_res=3, feature_width=3),
    EncodingConfig("LPE", 3, frequencies=2, grid_res=2),
    EncodingConfig("LPE", 2, frequencies=3, grid_res=3, shared_sin_cos=True),
    EncodingConfig("MultiGrid", 2, feature_width=2, levels=(2, 5)),
    EncodingConfig("MultiHash", 2, feature_width=2, levels=(3, 9), hash_table_size=32),
])
def test_encoder_backward_matches_finite_differences(cfg, np_rng):
    enc = build_encoder(cfg, Rng(7), dtype=np.float64, init_scale=1.0)
    xs = np_rng.uniform(size=(6, cfg.input_dim))
    probe = np_rng.standard_normal((6, cfg.output_dim()))
    sizes = [p.size for p in enc.params]

    def f(flat):
        for p, chunk in zip(enc.params, np.split(flat, np.cumsum(sizes)[:-1])):
            p[...] = chunk.reshape(p.shape)
        feats, cache = enc.encode(xs)
        grads = enc.backward(cache, probe)
        return float(np.sum(feats * probe)), np.concatenate([g.ravel() for g in grads])

    flat = np.concatenate([p.ravel() for p in enc.params])
    assert check_gradient(f, flat, 1e-5) <= 1e-6


def test_config_validation():
    with pytest.raises(ConfigError):
        EncodingConfig("FOO")
    with pytest.raises(ConfigError):
        EncodingConfig("LPE", 4)
    with pytest.raises(ConfigError):
        EncodingConfig("PE", 2, frequencies=0)
