import numpy as np
import pytest

from btreach.config import apply_overrides, load_config
from btreach.errors import ConfigError

BASE = """
[domain]
lower = -10 -10
upper = 10 10

[partition]
q = 4

[kernel]
weights = uniform

[data]
system = sine
n_samples = 300
seed = 7
noise_std = 3.16

[error]
delta = 0.2
complexity_bounds = 0.015 0.006
branch = min

[se_kernel]
amplitudes = 12 7
lengthscales_1 = 4000 2500
lengthscales_2 = 500 2000

[reach]
target_lower = -5 -5
target_upper = 5 5
x_init = 8 8
nu = 1e-8
max_iters = 1000000

[abstraction]
prune_threshold = 1e-9
"""


def write_cfg(tmp_path, text=BASE, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def edited(key_line, new_line):
    assert key_line in BASE
    return BASE.replace(key_line, new_line)


def test_parse_full_config(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    assert cfg.q == 4 and cfg.dim == 2
    assert np.array_equal(cfg.domain_lower, [-10, -10])
    assert cfg.system_name == "sine" and cfg.dataset_path is None
    assert cfg.n_samples == 300 and cfg.seed == 7
    assert cfg.noise_std == 3.16
    assert cfg.delta == 0.2 and cfg.branch == "min"
    assert np.array_equal(cfg.complexity_bounds, [0.015, 0.006])
    assert np.array_equal(cfg.amplitudes, [12, 7])
    assert np.array_equal(cfg.lengthscales[0], [4000, 2500])
    assert np.array_equal(cfg.lengthscales[1], [500, 2000])
    assert cfg.nu == 1e-8 and cfg.max_iters == 1_000_000
    assert cfg.prune_threshold == 1e-9
    assert cfg.weights is None and cfg.split_order is None
    # builders assemble without complaint
    assert cfg.scheme().n_cells == 16
    assert cfg.bt_kernel().q == 4
    assert len(cfg.se_kernels()) == 2
    assert cfg.system().name == "sine"
    assert cfg.target_box().dim == 2


def test_defaults_for_optional_keys(tmp_path):
    text = BASE.replace("nu = 1e-8\n", "").replace("max_iters = 1000000\n", "")
    text = text.replace("[abstraction]\nprune_threshold = 1e-9\n", "")
    text = text.replace("[kernel]\nweights = uniform\n", "")
    cfg = load_config(write_cfg(tmp_path, text))
    assert cfg.nu == 1e-8
    assert cfg.max_iters == 1_000_000
    assert cfg.prune_threshold == 1e-12
    assert cfg.weights is None
    assert cfg.dense_cap == 20000 and cfg.subsample == 0


def test_unknown_section_and_key_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, BASE + "\n[extra]\nfoo = 1\n"))
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, BASE + "\n[plot]\ndpi = 100\n"))
    bad = edited("q = 4", "q = 4\ndepth = 9")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, bad))
    bad = edited("amplitudes = 12 7", "amplitudes = 12 7\nscale = 2")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, bad))


def test_missing_section_and_file(tmp_path):
    text = BASE.replace("[error]", "[error_]")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, text))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


@pytest.mark.parametrize(
    "old,new",
    [
        ("delta = 0.2", "delta = 1.5"),
        ("delta = 0.2", "delta = 0"),
        ("q = 4", "q = 0"),
        ("q = 4", "q = two"),
        ("upper = 10 10", "upper = 10"),
        ("lower = -10 -10", "lower ="),
        ("complexity_bounds = 0.015 0.006", "complexity_bounds = 0.015"),
        ("complexity_bounds = 0.015 0.006", "complexity_bounds = -1 1"),
        ("x_init = 8 8", "x_init = 80 0"),
        ("target_upper = 5 5", "target_upper = 50 5"),
        ("target_lower = -5 -5", "target_lower = 6 6"),
        ("nu = 1e-8", "nu = 0"),
        ("max_iters = 1000000", "max_iters = 0"),
        ("n_samples = 300", "n_samples = 0"),
        ("noise_std = 3.16", "noise_std = 0"),
        ("weights = uniform", "weights = 1 1 -1 1"),
        ("weights = uniform", "weights = 1 1 1"),
        ("prune_threshold = 1e-9", "prune_threshold = -1e-9"),
        ("lengthscales_2 = 500 2000", "lengthscales_2 = 500 -2000"),
        ("amplitudes = 12 7", "amplitudes = 12"),
        ("system = sine", "system = linear1d"),
    ],
)
def test_invalid_values_rejected(tmp_path, old, new):
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, edited(old, new)))


def test_system_and_dataset_are_exclusive(tmp_path):
    both = edited("system = sine", "system = sine\ndataset = d.csv")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, both))
    neither = BASE.replace("system = sine\n", "")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, neither))


def test_se_kernel_needs_one_lengthscale_row_per_dim(tmp_path):
    text = BASE.replace("lengthscales_2 = 500 2000\n", "")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, text))


def test_overrides(tmp_path):
    path = write_cfg(tmp_path)
    cfg = load_config(
        path,
        overrides=["partition.q=6", "data.n_samples = 500", "reach.nu=1e-6"],
    )
    assert cfg.q == 6 and cfg.n_samples == 500 and cfg.nu == 1e-6
    with pytest.raises(ConfigError):
        load_config(path, overrides=["partition.q"])
    with pytest.raises(ConfigError):
        load_config(path, overrides=["q=6"])
    with pytest.raises(ConfigError):
        load_config(path, overrides=["partition.depth=6"])
    # overrides feed the same validation as file values
    with pytest.raises(ConfigError):
        load_config(path, overrides=["error.delta=2"])


def test_inline_comments_and_split_order(tmp_path):
    text = edited("q = 4", "q = 4  # sixteen cells\nsplit_order = 0 1 0 1")
    cfg = load_config(write_cfg(tmp_path, text))
    assert cfg.q == 4 and cfg.split_order == [0, 1, 0, 1]
    bad = edited("q = 4", "q = 4\nsplit_order = 0 1 0")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, bad))


def test_explicit_weights_accepted(tmp_path):
    cfg = load_config(
        write_cfg(tmp_path, edited("weights = uniform", "weights = 4 3 2 1"))
    )
    assert np.array_equal(cfg.weights, [4, 3, 2, 1])
    kern = cfg.bt_kernel()
    assert kern.q == 4


def test_external_dataset_requires_noise(tmp_path):
    from btreach.gp import Dataset

    csv = tmp_path / "data.csv"
    rng = np.random.default_rng(0)
    x = rng.uniform(-10, 10, (20, 2))
    Dataset(x=x, y=np.sin(x), noise_std=1.0).save_csv(csv)
    text = BASE.replace("system = sine", f"dataset = {csv}")
    cfg = load_config(write_cfg(tmp_path, text))
    data = cfg.load_dataset()
    assert data.n_samples == 20 and data.noise_std == 3.16
    missing = text.replace("noise_std = 3.16\n", "")
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, missing)).load_dataset()
