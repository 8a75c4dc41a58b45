import numpy as np
import pytest
import scipy.linalg as sla

from btreach.errbound import (
    ErrorConfig,
    ErrorTable,
    eps1_table,
    eps2_table,
    eps3_table,
    error_table,
    noise_norm_radical,
    spectrum_stats,
    trace_radical,
)
from btreach.errors import DataTooLargeError, InconsistentSchemeError
from btreach.gp import Dataset, aggregate, fit
from btreach.kernel import BtKernel, SeKernel
from btreach.partition import (
    PartitionScheme,
    StateBox,
    cell_centers,
    encode_points,
)


def make_setup(q=4, seed=51, n_samples=90, noise=0.5):
    rng = np.random.default_rng(seed)
    scheme = PartitionScheme(StateBox([-4.0, -4.0], [4.0, 4.0]), q)
    kern = BtKernel(scheme)
    x = rng.uniform(-4, 4, (n_samples, 2))
    y = np.sin(x) + rng.normal(0, noise, (n_samples, 2))
    data = Dataset(x=x, y=y, noise_std=noise)
    model = fit(data, kern)
    config = ErrorConfig(
        delta=0.1,
        complexity_bounds=[1.5, 2.0],
        true_kernels=[
            SeKernel(amplitude=2.0, lengthscales=[2.0, 3.0]),
            SeKernel(amplitude=1.5, lengthscales=[2.5, 2.0]),
        ],
    )
    return data, model, config


def test_config_validation():
    se = SeKernel(amplitude=1.0, lengthscales=[1.0])
    with pytest.raises(ValueError):
        ErrorConfig(delta=0.0, complexity_bounds=[1.0], true_kernels=[se])
    with pytest.raises(ValueError):
        ErrorConfig(delta=0.1, complexity_bounds=[-1.0], true_kernels=[se])
    with pytest.raises(ValueError):
        ErrorConfig(
            delta=0.1, complexity_bounds=[1.0], true_kernels=[se], branch="best"
        )
    with pytest.raises(ValueError):
        ErrorConfig(delta=0.1, complexity_bounds=[1.0, 1.0], true_kernels=[se])
    with pytest.raises(TypeError):
        ErrorConfig(delta=0.1, complexity_bounds=[1.0], true_kernels=[object()])


def test_confidence_accounting():
    se = SeKernel(amplitude=1.0, lengthscales=[1.0, 1.0])
    both = ErrorConfig(
        delta=0.1, complexity_bounds=[1.0, 1.0], true_kernels=[se, se]
    )
    assert both.confidence == pytest.approx(1.0 - 2 * 2 * 0.1)
    single = ErrorConfig(
        delta=0.1,
        complexity_bounds=[1.0, 1.0],
        true_kernels=[se, se],
        branch="term_a",
    )
    assert single.confidence == pytest.approx(1.0 - 2 * 0.1)


def test_radicals():
    assert noise_norm_radical(100, 0.5) == pytest.approx(
        np.sqrt(100 + 2 * np.sqrt(100 * np.log(2.0)) + 2 * np.log(2.0))
    )
    assert trace_radical(4.0, 2.0, 1.0, np.exp(-1.0)) == pytest.approx(
        np.sqrt(4.0 + 2 * np.sqrt(2.0) + 2.0)
    )


def test_spectrum_stats_match_dense_gram():
    data, model, config = make_setup()
    agg = aggregate(data, model.scheme)
    tr, tr2, op = spectrum_stats(model.kernel, agg, data.noise_std)
    cells = encode_points(data.x, model.scheme)
    K_dense = model.kernel.cross(cells, cells)
    lam = np.clip(np.linalg.eigvalsh(K_dense), 0.0, None)
    e = lam / (lam + data.noise_std**2)
    assert tr == pytest.approx(e.sum(), abs=1e-8)
    assert tr2 == pytest.approx(np.dot(e, e), abs=1e-8)
    assert op == pytest.approx(e.max(), abs=1e-10)


def test_eps1_term_a_matches_dense_path():
    data, model, config = make_setup()
    cfg_a = ErrorConfig(
        delta=config.delta,
        complexity_bounds=config.complexity_bounds,
        true_kernels=config.true_kernels,
        branch="term_a",
    )
    table = eps1_table(data, model, cfg_a)
    cells = encode_points(data.x, model.scheme)
    N = data.n_samples
    C = model.kernel.cross(cells, cells) + data.noise_std**2 * np.eye(N)
    all_cells = np.arange(model.scheme.n_cells, dtype=np.int64)
    kq = model.kernel.cross(cells, all_cells)
    sol = np.linalg.solve(C, kq)
    dense = np.linalg.norm(sol, axis=0) * noise_norm_radical(N, config.delta)
    assert np.max(np.abs(table[:, 0] - dense)) < 1e-8
    assert np.array_equal(table[:, 0], table[:, 1])


def test_eps1_min_branch_takes_minimum():
    data, model, config = make_setup()
    t_min = eps1_table(data, model, config)
    t_a = eps1_table(
        data,
        model,
        ErrorConfig(
            delta=config.delta,
            complexity_bounds=config.complexity_bounds,
            true_kernels=config.true_kernels,
            branch="term_a",
        ),
    )
    t_b = eps1_table(
        data,
        model,
        ErrorConfig(
            delta=config.delta,
            complexity_bounds=config.complexity_bounds,
            true_kernels=config.true_kernels,
            branch="term_b",
        ),
    )
    assert np.allclose(t_min, np.minimum(t_a, t_b))
    assert np.all(t_min > 0)


def test_eps2_in_cell_variation():
    data, model, config = make_setup()
    table = eps2_table(model, config)
    # uniform grid: the bound is cell-independent
    assert np.allclose(table, table[0])
    kern = config.true_kernels[0]
    box_widths = model.scheme.domain.widths / np.array(
        [model.scheme.axis_slice_count(d) for d in range(2)]
    )
    half = 0.5 * box_widths
    z = half / kern.lengthscales
    gap = kern.amplitude**2 * (1.0 - np.exp(-0.5 * np.dot(z, z)))
    expect = config.complexity_bounds[0] * np.sqrt(2.0 * gap)
    assert table[0, 0] == pytest.approx(expect, rel=1e-12)


def test_eps3_matches_dense_quadratic_form():
    data, model, config = make_setup(n_samples=60)
    table, heuristic = eps3_table(data, model, config)
    assert not heuristic
    cells = encode_points(data.x, model.scheme)
    N = data.n_samples
    C = model.kernel.cross(cells, cells) + data.noise_std**2 * np.eye(N)
    centers = cell_centers(model.scheme)
    for d, kern in enumerate(config.true_kernels):
        K_true = kern.cross(data.x, data.x)
        for s in (0, 5, model.scheme.n_cells - 1):
            k_hat = model.kernel.cross(cells, np.array([s]))[:, 0]
            alpha = np.linalg.solve(C, k_hat)
            k_true_s = kern.cross(data.x, centers[s : s + 1])[:, 0]
            quad = (
                alpha @ K_true @ alpha
                - 2.0 * alpha @ k_true_s
                + kern.amplitude**2
            )
            expect = config.complexity_bounds[d] * np.sqrt(abs(quad))
            assert table[s, d] == pytest.approx(expect, abs=1e-8)


def test_eps2_eps3_scale_linearly_in_complexity_bound():
    data, model, config = make_setup()
    doubled = ErrorConfig(
        delta=config.delta,
        complexity_bounds=2.0 * config.complexity_bounds,
        true_kernels=config.true_kernels,
    )
    assert np.allclose(
        eps2_table(model, doubled), 2.0 * eps2_table(model, config)
    )
    t1, _ = eps3_table(data, model, config)
    t2, _ = eps3_table(data, model, doubled)
    assert np.allclose(t2, 2.0 * t1)


def test_error_table_assembly_and_round_trip(tmp_path):
    data, model, config = make_setup()
    table = error_table(data, model, config)
    assert np.allclose(table.eps, table.eps1 + table.eps2 + table.eps3)
    assert table.confidence == pytest.approx(config.confidence)
    path = tmp_path / "errors.json"
    table.save(path, q=model.scheme.q)
    back = ErrorTable.load(path)
    assert np.array_equal(back.eps1, table.eps1)
    assert np.array_equal(back.eps2, table.eps2)
    assert np.array_equal(back.eps3, table.eps3)
    assert back.delta == table.delta
    assert back.branch == table.branch
    assert back.heuristic == table.heuristic


def test_error_table_dimension_guard():
    data, model, _ = make_setup()
    bad = ErrorConfig(
        delta=0.1,
        complexity_bounds=[1.0],
        true_kernels=[SeKernel(amplitude=1.0, lengthscales=[1.0, 1.0])],
    )
    with pytest.raises(InconsistentSchemeError):
        error_table(data, model, bad)


def test_dense_cap_and_subsample_fallback():
    data, model, config = make_setup(n_samples=120)
    capped = ErrorConfig(
        delta=config.delta,
        complexity_bounds=config.complexity_bounds,
        true_kernels=config.true_kernels,
        dense_cap=50,
    )
    with pytest.raises(DataTooLargeError):
        eps3_table(data, model, capped)
    fallback = ErrorConfig(
        delta=config.delta,
        complexity_bounds=config.complexity_bounds,
        true_kernels=config.true_kernels,
        dense_cap=50,
        subsample=40,
        subsample_seed=7,
    )
    table, heuristic = eps3_table(data, model, fallback)
    assert heuristic
    assert np.all(np.isfinite(table))
    full = error_table(data, model, fallback)
    assert full.heuristic
    # the subsample is seeded, so the fallback is reproducible
    again, _ = eps3_table(data, model, fallback)
    assert np.array_equal(table, again)


def test_grouped_gram_blocks_match_direct(tmp_path):
    # block size smaller than N exercises the streaming accumulation
    from btreach.errbound import _grouped_true_cross, _grouped_true_gram

    data, model, config = make_setup(n_samples=70)
    agg = aggregate(data, model.scheme)
    X_sorted = data.x[agg.sort_idx]
    kern = config.true_kernels[0]
    G = _grouped_true_gram(X_sorted, agg.starts, kern, block=16)
    K = kern.cross(X_sorted, X_sorted)
    counts = np.diff(np.append(agg.starts, X_sorted.shape[0]))
    groups = np.repeat(np.arange(agg.starts.size), counts)
    P = np.zeros((agg.starts.size, X_sorted.shape[0]))
    P[groups, np.arange(X_sorted.shape[0])] = 1.0
    assert np.allclose(G, P @ K @ P.T, atol=1e-10)
    centers = cell_centers(model.scheme)
    T = _grouped_true_cross(X_sorted, agg.starts, centers, kern, block=16)
    assert np.allclose(T, P @ kern.cross(X_sorted, centers), atol=1e-10)
