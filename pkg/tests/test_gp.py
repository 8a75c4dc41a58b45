import numpy as np
import pytest

from btreach.gp import AggregatedDataset, BtgpModel, Dataset, aggregate, fit
from btreach.kernel import BtKernel
from btreach.partition import PartitionScheme, StateBox, encode_points

from .oracles import full_gp_posterior


def make_setup(q=4, n=2, seed=31, n_samples=80, noise=0.4):
    rng = np.random.default_rng(seed)
    lo, hi = -np.ones(n) * 5, np.ones(n) * 5
    scheme = PartitionScheme(StateBox(lo, hi), q)
    kern = BtKernel(scheme)
    x = rng.uniform(lo, hi, (n_samples, n))
    y = np.tanh(x) + rng.normal(0, noise, (n_samples, n))
    return kern, Dataset(x=x, y=y, noise_std=noise)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(x=np.zeros((3, 2)), y=np.zeros((3, 1)), noise_std=0.1)
    with pytest.raises(ValueError):
        Dataset(x=np.zeros((0, 2)), y=np.zeros((0, 2)), noise_std=0.1)
    with pytest.raises(ValueError):
        Dataset(x=np.zeros((3, 2)), y=np.zeros((3, 2)), noise_std=-0.5)
    # zero noise is a legal dataset (simulation output), just not fittable
    data = Dataset(x=np.zeros((1, 2)), y=np.zeros((1, 2)), noise_std=0.0)
    assert data.n_samples == 1 and data.dim == 2


def test_dataset_csv_round_trip(tmp_path):
    kern, data = make_setup()
    path = tmp_path / "d.csv"
    data.save_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,y1,y2"
    back = Dataset.load_csv(path, noise_std=data.noise_std)
    assert np.array_equal(back.x, data.x)
    assert np.array_equal(back.y, data.y)


def test_dataset_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c,d\n0,0,0,0\n")
    with pytest.raises(ValueError):
        Dataset.load_csv(path, noise_std=0.1)


def test_aggregate_groups_by_cell():
    kern, data = make_setup(q=3, n_samples=50)
    agg = aggregate(data, kern.scheme)
    assert isinstance(agg, AggregatedDataset)
    assert agg.n_total == 50
    assert int(agg.mult.sum()) == 50
    assert np.all(np.diff(agg.cells) > 0)
    cells = encode_points(data.x, kern.scheme)
    for i, c in enumerate(agg.cells):
        members = data.y[cells == c]
        assert len(members) == agg.mult[i]
        assert np.allclose(agg.y_mean[i], members.mean(axis=0))


def test_aggregated_posterior_equals_full_posterior():
    # duplicated-cell averaging with noise sigma^2/m reproduces the dense fit
    for seed in (41, 42, 43):
        kern, data = make_setup(q=4, seed=seed, n_samples=120)
        model = fit(data, kern)
        cells = encode_points(data.x, kern.scheme)
        mu, var = full_gp_posterior(
            cells, data.y, data.noise_std, kern, np.arange(kern.scheme.n_cells)
        )
        assert np.max(np.abs(mu - model.mean_table)) < 1e-8
        assert np.max(np.abs(np.maximum(var, 1e-15) - model.var_table)) < 1e-8


def test_posterior_variance_below_prior():
    kern, data = make_setup(q=5, n_samples=200)
    model = fit(data, kern)
    assert np.all(model.var_table <= 1.0 + 1e-12)
    assert np.all(model.var_table > 0.0)


def test_more_data_shrinks_variance():
    kern, data = make_setup(q=3, n_samples=40, seed=44)
    model_a = fit(data, kern)
    # duplicate the dataset: every occupied cell gains samples
    data_b = Dataset(
        x=np.vstack([data.x, data.x]),
        y=np.vstack([data.y, data.y]),
        noise_std=data.noise_std,
    )
    model_b = fit(data_b, kern)
    occupied = np.unique(encode_points(data.x, kern.scheme))
    assert np.all(
        model_b.var_table[occupied] <= model_a.var_table[occupied] + 1e-12
    )


def test_empty_cells_keep_prior():
    kern, _ = make_setup(q=6)
    # one sample pinned in a single cell leaves distant cells at the prior
    x = np.array([[4.9, 4.9]])
    y = np.array([[1.0, -1.0]])
    model = fit(Dataset(x=x, y=y, noise_std=0.5), kern)
    # the opposite corner shares no prefix with the data cell
    far = 0
    assert model.mean_table[far, 0] == pytest.approx(0.0, abs=1e-15)
    assert model.var_table[far] == pytest.approx(1.0)


def test_fit_deterministic():
    kern, data = make_setup(q=4)
    a = fit(data, kern)
    b = fit(data, kern)
    assert np.array_equal(a.mean_table, b.mean_table)
    assert np.array_equal(a.var_table, b.var_table)


def test_fit_rejects_zero_noise_and_dim_mismatch():
    kern, data = make_setup(q=3)
    flat = Dataset(x=data.x, y=data.y, noise_std=0.0)
    with pytest.raises(ValueError):
        fit(flat, kern)
    kern1d = BtKernel(PartitionScheme(StateBox([0.0], [1.0]), 3))
    with pytest.raises(ValueError):
        fit(data, kern1d)


def test_predict_points_and_accessors():
    kern, data = make_setup(q=4)
    model = fit(data, kern)
    means, variances = model.predict_points(data.x[:7])
    cells = encode_points(data.x[:7], kern.scheme)
    for i, c in enumerate(cells):
        assert means[i, 0] == model.mean(int(c), 0)
        assert variances[i, 1] == model.variance(int(c))
    m, v = model.predictive_density_params(int(cells[0]), 0, include_noise=True)
    assert v == pytest.approx(model.var_table[cells[0]] + data.noise_std**2)


def test_model_serialization_round_trip(tmp_path):
    kern, data = make_setup(q=4)
    model = fit(data, kern)
    path = tmp_path / "model.json"
    model.save(path)
    back = BtgpModel.load(path)
    assert back.scheme == model.scheme
    assert np.array_equal(back.mean_table, model.mean_table)
    assert np.array_equal(back.var_table, model.var_table)
    assert back.noise_std == model.noise_std
    assert np.array_equal(back.kernel.weights, model.kernel.weights)


def test_model_load_rejects_foreign_payload(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ValueError):
        BtgpModel.load(path)
