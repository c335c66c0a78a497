import numpy as np
import pytest
from pytest import mark

from pyhrom.datasets.burgers import BurgersConfig, TEST_RE, TRAIN_RE, burgers_initial_condition, \
    burgers_solution, burgers_trajectory, generate_burgers
from pyhrom.datasets.ks import KSConfig, generate_ks, ks_initial_condition, simulate_ks
from pyhrom.datasets.snapshots import ByParameter, ByTime, ShuffledRatio, SnapshotMatrix, add_noise, \
    destandardize, split_dataset, standardize
from pyhrom.datasets.wave import WaveConfig, gen_traveling_wave, generate_wave
from pyhrom.exceptions import HromConfigError, HromDomainError, HromSimulationError, HromValidationError
from pyhrom.numerics import RandomStream
from tests.conftest import low_rank_snapshots


# Kuramoto-Sivashinsky

def _small_ks(**kwargs) -> KSConfig:
    fields = dict(N=64, Lx=22.0, dt=0.01, n_steps=100)
    fields.update(kwargs)
    return KSConfig(**fields)


@mark.parametrize("fields, field",
                  [
                      ({'N': 100}, 'N'),
                      ({'N': 2}, 'N'),
                      ({'dt': 0.0}, 'dt'),
                      ({'n_steps': 0}, 'n_steps'),
                      ({'n_steps': 10, 'transient_skip': 10}, 'transient_skip'),
                      ({'save_every': 0}, 'save_every'),
                  ], ids=['ks_not_power_of_two', 'ks_too_small', 'ks_dt', 'ks_steps', 'ks_skip', 'ks_save_every'])
def test_ks_config_invalid(fields, field):
    with pytest.raises(HromConfigError) as except_info:
        KSConfig(**fields)

    assert except_info.value.field == field


def test_ks_saved_steps():
    config = KSConfig(N=32, n_steps=40, save_every=3)

    assert config.transient_skip == 10
    assert config.saved_steps.tolist() == list(range(11, 41, 3))


@mark.numerics
def test_ks_zero_initial_condition_stays_zero():
    config = _small_ks()

    out = simulate_ks(config, RandomStream(0), u0=np.zeros(config.N))

    assert np.all(out == 0.0)


@mark.numerics
def test_ks_mean_conserved():
    config = _small_ks(n_steps=300, transient_skip=0)
    u0 = ks_initial_condition(config, RandomStream(3)) + 0.25

    out = simulate_ks(config, RandomStream(3), u0=u0)

    assert np.max(np.abs(out.mean(axis=1) - u0.mean())) < 1e-10


@mark.numerics
def test_ks_initial_condition_spectrum():
    config = _small_ks(max_wavenumber=6)

    u0 = ks_initial_condition(config, RandomStream(5))
    support = np.flatnonzero(np.abs(np.fft.rfft(u0)) > 1e-8 * config.N)

    assert support.size > 0
    assert set(support.tolist()) <= set(range(1, 7))
    assert u0.mean() == pytest.approx(0.0, abs=1e-12)


@mark.numerics
@mark.slow
def test_ks_second_order_in_time():
    x = 22.0 * np.arange(64) / 64
    u0 = np.cos(2 * np.pi * x / 22.0) + 0.5 * np.sin(4 * np.pi * x / 22.0)

    finals = []
    for dt, steps in [(0.02, 100), (0.01, 200), (0.005, 400)]:
        config = _small_ks(dt=dt, n_steps=steps, transient_skip=steps - 1)
        finals.append(simulate_ks(config, RandomStream(0), u0=u0)[-1])

    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
    assert 3.5 <= ratio <= 4.5


@mark.numerics
def test_ks_blow_up():
    config = KSConfig(N=64, dt=0.01, n_steps=50)
    u0 = 2e6 * np.sin(2 * np.pi * config.grid / config.Lx)

    with pytest.raises(HromSimulationError) as except_info:
        simulate_ks(config, RandomStream(0), u0=u0)

    assert except_info.value.step == 1
    assert 'blew up' in str(except_info.value)


def test_generate_ks():
    config = KSConfig(N=32, n_steps=40, seed=4)

    first, second = generate_ks(config), generate_ks(config)

    assert first.data.shape == (30, 32)
    assert (first.train_idx.size, first.test_idx.size) == (21, 9)
    assert np.array_equal(first.data, second.data)
    assert first.times == pytest.approx(np.arange(11, 41) * 0.01)
    assert first.meta['generator'] == 'ks' and first.meta['seed'] == 4
    assert not first.standardized


# Burgers

@mark.numerics
@mark.parametrize("re", [100.0, 1000.0, 2450.0], ids=['burgers_re_100', 'burgers_re_1000', 'burgers_re_2450'])
def test_burgers_boundary_and_initial_condition(re):
    config = BurgersConfig(Re=re)

    u = burgers_trajectory(config)

    assert u.shape == (100, 128)
    assert np.all(u[:, 0] == 0.0)
    assert np.all(np.isfinite(u))
    assert u[0] == pytest.approx(burgers_initial_condition(config, config.x), abs=1e-14)


@mark.numerics
def test_burgers_against_direct_formula():
    config = BurgersConfig(Re=100.0)
    x, t = np.meshgrid(config.x, config.t)

    direct = (x / (t + 1)) / (1 + np.sqrt((t + 1) / config.t0) * np.exp(100.0 * x * x / (4 * (t + 1))))

    assert burgers_trajectory(config) == pytest.approx(direct, rel=1e-12, abs=1e-15)


@mark.numerics
def test_burgers_satisfies_pde():
    config = BurgersConfig(Re=100.0)
    x = np.linspace(0.1, 0.9, 17)
    t, h = 0.5, 1e-4

    def u(dx=0.0, dt=0.0):
        return burgers_solution(config, x + dx, t + dt)

    u_t = (u(dt=h) - u(dt=-h)) / (2 * h)
    u_x = (u(dx=h) - u(dx=-h)) / (2 * h)
    u_xx = (u(dx=h) - 2 * u() + u(dx=-h)) / (h * h)
    residual = u_t + u() * u_x - config.nu * u_xx

    assert np.max(np.abs(residual)) < 1e-5


def test_burgers_split(burgers_split_case):
    case = burgers_split_case
    train_re = case['train_re']
    test_re = case['test_re']

    assert TRAIN_RE == tuple(float(r) for r in range(train_re['start'], train_re['stop'] + 1, train_re['step']))
    assert TEST_RE == tuple(float(r) for r in range(test_re['start'], test_re['stop'] + 1, test_re['step']))

    data = generate_burgers(nx=case['nx'], nt=case['nt'])

    assert data.data.shape == ((train_re['count'] + test_re['count']) * case['nt'], case['nx'])
    assert data.train_idx.size == train_re['count'] * case['nt']
    assert data.test_idx.size == test_re['count'] * case['nt']
    assert set(data.params[data.train_idx, 0].tolist()) == set(TRAIN_RE)
    assert set(data.params[data.test_idx, 0].tolist()) == set(TEST_RE)
    assert np.unique(data.trajectory).size == train_re['count'] + test_re['count']


def test_burgers_rows_match_trajectories():
    data = generate_burgers(train_re=[200.0], test_re=[350.0], nx=16, nt=5)

    assert data.data[:5] == pytest.approx(burgers_trajectory(BurgersConfig(Re=200.0, nx=16, nt=5)))
    assert data.data[5:] == pytest.approx(burgers_trajectory(BurgersConfig(Re=350.0, nx=16, nt=5)))
    assert data.times[:5] == pytest.approx(np.linspace(0.0, 2.0, 5))


def test_burgers_config_invalid():
    with pytest.raises(HromConfigError) as except_info:
        BurgersConfig(Re=0.0)

    assert except_info.value.field == 'Re'


# Traveling wave

@mark.numerics
def test_wave_profiles():
    config = WaveConfig(n_steps=1000)

    u = gen_traveling_wave(config)
    mu = config.mu(np.arange(1000))

    assert u.shape == (1000, 256)
    assert u.sum(axis=1) == pytest.approx(np.ones(1000), abs=1e-9)
    assert mu.min() >= 28.0 and mu.max() <= 228.0

    clear = np.abs(mu - np.floor(mu) - 0.5) > 1e-6
    assert np.array_equal(np.argmax(u, axis=1)[clear], np.round(mu[clear]).astype(int))


def test_generate_wave():
    data = generate_wave(WaveConfig(nx=32, n_steps=101))

    assert data.train_idx.tolist() == list(range(50))
    assert data.test_idx.tolist() == list(range(50, 101))
    assert data.times[-1] == 100.0


# Standardization, splits and noise

def test_standardize_uses_train_statistics():
    raw = RandomStream(1).normal(3.0, 2.0, size=(50, 6))
    data = SnapshotMatrix(raw, train_idx=np.arange(35), test_idx=np.arange(35, 50))

    scaled = standardize(data)

    assert scaled.standardized
    assert scaled.train.mean(axis=0) == pytest.approx(np.zeros(6), abs=1e-12)
    assert scaled.train.std(axis=0) == pytest.approx(np.ones(6), abs=1e-12)
    assert scaled.mean == pytest.approx(raw[:35].mean(axis=0))
    assert destandardize(scaled).data == pytest.approx(raw, abs=1e-12)
    assert np.array_equal(data.data, raw)


def test_standardize_constant_feature():
    raw = RandomStream(2).normal(size=(20, 3))
    raw[:, 1] = 4.0

    scaled = standardize(SnapshotMatrix(raw))

    assert scaled.std[1] == 1.0
    assert np.all(scaled.data[:, 1] == 0.0)


def test_standardize_empty_train_split():
    data = SnapshotMatrix(np.ones((4, 2)), train_idx=np.zeros(0, dtype=np.int64), test_idx=np.arange(4))

    with pytest.raises(HromDomainError):
        standardize(data)


def test_shuffled_split():
    train, test = split_dataset(2000, ShuffledRatio(0.7, seed=3))

    assert (train.size, test.size) == (1400, 600)
    assert np.intersect1d(train, test).size == 0
    assert np.array_equal(np.union1d(train, test), np.arange(2000))
    assert np.array_equal(train, split_dataset(2000, ShuffledRatio(0.7, seed=3))[0])
    assert not np.array_equal(train, split_dataset(2000, ShuffledRatio(0.7, seed=4))[0])


def test_time_split():
    train, test = split_dataset(7, ByTime(0.5))

    assert train.tolist() == [0, 1, 2]
    assert test.tolist() == [3, 4, 5, 6]


@mark.parametrize("make, field",
                  [
                      (lambda: ShuffledRatio(1.0), 'ratio'),
                      (lambda: ShuffledRatio(0.0), 'ratio'),
                      (lambda: ByTime(1.5), 'fraction'),
                      (lambda: ByParameter((100.0, 200.0), (200.0, 300.0)), 'test_values'),
                  ], ids=['ratio_one', 'ratio_zero', 'fraction', 'parameter_overlap'])
def test_split_policy_invalid(make, field):
    with pytest.raises(HromConfigError) as except_info:
        make()

    assert except_info.value.field == field


def test_parameter_split_needs_params():
    with pytest.raises(HromConfigError):
        split_dataset(SnapshotMatrix(np.ones((3, 2))), ByParameter((1.0,), (2.0,)))


def test_snapshot_matrix_validation():
    with pytest.raises(HromValidationError):
        SnapshotMatrix(np.ones((3, 5)), n_components=2)
    with pytest.raises(HromValidationError):
        SnapshotMatrix(np.ones((3, 2)), train_idx=[0, 1], test_idx=[1, 2])


def test_cell_major_layout():
    data = SnapshotMatrix(np.arange(12.0).reshape(2, 6), n_components=2)

    assert (data.M, data.N, data.Q, data.features) == (2, 3, 2, 6)
    assert data.data[0].reshape(data.N, data.Q)[1].tolist() == [2.0, 3.0]


def test_subset():
    data = low_rank_snapshots(m=10)

    part = data.subset([7, 2])

    assert np.array_equal(part.data, data.data[[7, 2]])
    assert part.train_idx.tolist() == [0, 1]
    assert part.test_idx.size == 0


def test_add_noise_level_zero():
    data = low_rank_snapshots()

    noisy = add_noise(data, 0.0, RandomStream(0))

    assert np.array_equal(noisy.data, data.data)
    assert noisy.data is not data.data


@mark.parametrize("standardized", [False, True], ids=['noise_raw', 'noise_standardized'])
def test_add_noise_magnitude(standardized):
    raw = RandomStream(4).normal(0.0, 3.0, size=(400, 250))
    data = SnapshotMatrix(raw)
    if standardized:
        data = standardize(data)
    max_abs = float(np.max(np.abs(raw)))
    before = data.data.copy()

    noisy = add_noise(data, 0.1, RandomStream(5))
    difference = noisy.physical() - data.physical()

    assert np.std(difference) == pytest.approx(0.1 * max_abs, rel=0.02)
    assert abs(np.mean(difference)) < 0.01 * max_abs
    assert np.array_equal(data.data, before)


def test_add_noise_negative_level():
    with pytest.raises(HromDomainError):
        add_noise(low_rank_snapshots(), -0.1, RandomStream(0))


def test_csv_round_trip(tmp_path):
    data = generate_burgers(train_re=[100.0], test_re=[150.0], nx=8, nt=4)
    path = str(tmp_path / 'burgers.csv')

    data.to_csv(path)
    loaded = SnapshotMatrix.from_csv(path)

    assert np.array_equal(loaded.data, data.data)
    assert np.array_equal(loaded.params, data.params)
    assert np.array_equal(loaded.trajectory, data.trajectory)
    assert np.array_equal(loaded.times, data.times)
    assert list(data.to_frame().columns[:3]) == ['trajectory', 'time', 'param0']
