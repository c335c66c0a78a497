import numpy as np
import pytest
from pytest import mark

from pyhrom.exceptions import HromConfigError, HromDomainError, HromFormatError, HromValidationError
from pyhrom.models.hybrid import Variant, build_model
from pyhrom.models.lstm import LSTMCell, LSTMNet, build_lstm, lstm_step
from pyhrom.nn.gradcheck import gradient_check
from pyhrom.nn.params import ParamStore
from pyhrom.nn.tape import Tensor
from pyhrom.numerics import RandomStream
from pyhrom.surrogate import AugmentedLatentSeries, LSTMConfig, augment_latent, build_windows, \
    encode_trajectories, read_latent_csv, rollout, surrogate_errors, train_lstm, write_latent_csv
from pyhrom.training import mse_loss
from tests.conftest import low_rank_snapshots


def trajectory_snapshots():
    """ Six trajectories of ten rank-2 snapshots with one parameter each; the last two form the test split. """

    data = low_rank_snapshots(m=60, rank=2)
    trajectory = np.repeat(np.arange(6), 10)
    return data.replace(params=(100.0 * (trajectory + 1))[:, None], trajectory=trajectory,
                        train_idx=np.arange(40), test_idx=np.arange(40, 60))


def test_lstm_step_with_zero_weights():
    cell = LSTMCell(2, 3, ParamStore(), 'cell')
    c = np.array([[1.0, -2.0, 4.0]])

    h_next, c_next = lstm_step(cell, np.array([[0.3, -0.7]]), np.array([[0.1, 0.2, 0.3]]), c)

    assert c_next.value == pytest.approx(0.5 * c)
    assert h_next.value == pytest.approx(0.5 * np.tanh(0.5 * c))


def test_lstm_step_zero_state_and_input():
    cell = LSTMCell(2, 3, ParamStore(), 'cell')
    cell.reset_parameters(RandomStream(0))
    for gate in ('input', 'forget', 'output', 'candidate'):
        cell.biases[gate].assign(np.zeros(3))

    h_next, c_next = lstm_step(cell, np.zeros((1, 2)), np.zeros((1, 3)), np.zeros((1, 3)))

    assert np.all(c_next.value == 0.0)
    assert np.all(h_next.value == 0.0)


def test_lstm_step_dimension_mismatch():
    cell = LSTMCell(2, 3, ParamStore(), 'cell')

    with pytest.raises(HromValidationError):
        lstm_step(cell, np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)))


@mark.numerics
@mark.parametrize("layers", [1, 2, 3], ids=['bptt_one_layer', 'bptt_two_layers', 'bptt_three_layers'])
def test_backpropagation_through_time(layers):
    stream = RandomStream(layers)
    net = build_lstm(3, 2, [4] * layers, 4, stream.child(0))
    windows = stream.child(1).normal(size=(5, 4, 3))
    targets = stream.child(2).normal(size=(5, 2))

    report = gradient_check(lambda: mse_loss(Tensor(targets), net.forward(windows)), net.store.trainable())

    assert report.passed, report


@mark.parametrize("fields, field",
                  [
                      ({'hidden': []}, 'hidden'),
                      ({'k': 0}, 'k'),
                      ({'output_size': 4}, 'output_size'),
                  ], ids=['lstm_no_layers', 'lstm_no_window', 'lstm_output_too_large'])
def test_lstm_net_invalid(fields, field):
    arguments = dict(input_size=3, output_size=2, hidden=[4], k=2)
    arguments.update(fields)

    with pytest.raises(HromConfigError) as except_info:
        LSTMNet(**arguments)

    assert except_info.value.field == field


def test_lstm_net_shapes():
    net = build_lstm(5, 3, [6, 4], 7, RandomStream(1))

    assert net.n_params == 2
    assert net.forward(np.zeros((9, 7, 5))).shape == (9, 3)
    with pytest.raises(HromValidationError):
        net.forward(np.zeros((9, 7, 4)))


def _series(lengths, n_latent=2):
    rows = sum(lengths)
    trajectory = np.repeat(np.arange(len(lengths)), lengths)
    values = np.column_stack([np.arange(rows, dtype=np.float64), 10.0 * np.arange(rows),
                              trajectory.astype(np.float64)])
    return AugmentedLatentSeries(values, n_latent, trajectory)


def test_window_counts(window_count_case):
    windows, targets = build_windows(_series(window_count_case['lengths']), window_count_case['k'])

    assert windows.shape == (window_count_case['windows'], window_count_case['k'], 3)
    assert targets.shape == (window_count_case['windows'], 2)


def test_windows_never_cross_trajectories():
    series = _series([12, 30, 15])
    k = 5

    windows, targets = build_windows(series, k)

    for window, target in zip(windows, targets):
        assert np.all(np.diff(window[:, 0]) == 1.0)
        assert np.all(window[:, 2] == window[0, 2])
        assert target[0] == window[-1, 0] + 1
        assert series.trajectory[int(target[0])] == window[0, 2]


def test_windows_for_too_short_trajectory():
    with pytest.raises(HromDomainError):
        build_windows(_series([20, 5]), 5)
    with pytest.raises(HromDomainError):
        build_windows(_series([20]), 0)


@mark.parametrize("z, params, expected",
                  [
                      ([1.0, 2.0], [3.0], [1.0, 2.0, 3.0]),
                      ([1.0], [], [1.0]),
                      ([[1.0], [2.0]], [5.0, 6.0], [[1.0, 5.0, 6.0], [2.0, 5.0, 6.0]]),
                  ], ids=['augment_vector', 'augment_no_params', 'augment_rows'])
def test_augment_latent(z, params, expected):
    assert augment_latent(z, params).tolist() == expected


def test_latent_series_validation():
    with pytest.raises(HromValidationError):
        AugmentedLatentSeries([[0.0, 1.0], [0.0, 2.0]], 1, [0, 0])
    with pytest.raises(HromValidationError):
        AugmentedLatentSeries([[0.0, 1.0]], 3)

    series = AugmentedLatentSeries([[0.0, 1.0], [0.0, 2.0]], 1, [0, 1])
    assert series.blocks() == [(0, 1), (1, 2)]
    assert series.steps.tolist() == [0, 0]


def test_encode_trajectories():
    data = trajectory_snapshots()
    model = build_model(Variant.POD, data, 2)

    series = encode_trajectories(model, data, data.test_idx)

    assert series.values.shape == (20, 3)
    assert series.latent == pytest.approx(data.test @ model.basis)
    assert series.params[:, 0].tolist() == [500.0] * 10 + [600.0] * 10
    assert series.blocks() == [(0, 10), (10, 20)]


def test_rollout():
    net = build_lstm(3, 2, [5], 4, RandomStream(3))
    seed_window = RandomStream(4).normal(size=(4, 3))

    assert rollout(net, seed_window, 0, [0.5]).shape == (0, 2)

    first = rollout(net, seed_window, 6, [0.5])
    second = rollout(net, seed_window, 6, [0.5])

    assert np.array_equal(first, second)
    assert first[0] == pytest.approx(net.forward(seed_window[None]).value[0])
    shifted = np.vstack([seed_window[1:], augment_latent(first[0], [0.5])])
    assert first[1] == pytest.approx(net.forward(shifted[None]).value[0])


def test_rollout_window_width():
    net = build_lstm(3, 2, [5], 4, RandomStream(3))

    with pytest.raises(HromValidationError):
        rollout(net, np.zeros((4, 2)), 3)


@mark.parametrize("length", [3, 5], ids=['window_too_short', 'window_too_long'])
def test_rollout_window_length(length):
    net = build_lstm(3, 2, [5], 4, RandomStream(3))

    with pytest.raises(HromValidationError) as except_info:
        rollout(net, np.zeros((length, 3)), 3)

    assert 'k = 4' in str(except_info.value)


def test_lstm_config_invalid():
    with pytest.raises(HromConfigError) as except_info:
        LSTMConfig(scheduler='step')

    assert except_info.value.field == 'scheduler'


@mark.training
def test_learns_constant_series():
    values = np.tile([0.5, -0.3], (40, 1))
    windows, targets = build_windows(AugmentedLatentSeries(values, 2), 3)
    net = build_lstm(2, 2, [8], 3, RandomStream(5))
    config = LSTMConfig(hidden=[8], k=3, epochs=200, lr=1e-2, scheduler='constant', log_every=0)

    net, report = train_lstm(net, windows, targets, config)

    assert report.final_train < 1e-2 * report.losses[0]
    assert rollout(net, values[:3], 10) == pytest.approx(np.tile([0.5, -0.3], (10, 1)), abs=0.05)


@mark.training
@mark.slow
def test_learns_decay():
    starts = np.linspace(-1.0, 1.0, 8)
    values = np.concatenate([z0 * 0.9 ** np.arange(40) for z0 in starts])[:, None]
    series = AugmentedLatentSeries(values, 1, np.repeat(np.arange(8), 40))
    windows, targets = build_windows(series, 10)
    net = build_lstm(1, 1, [40, 40], 10, RandomStream(6))
    config = LSTMConfig(hidden=[40, 40], k=10, log_every=0)

    net, _ = train_lstm(net, windows, targets, config)

    z0 = 0.8
    seed_window = (z0 * 0.9 ** np.arange(10))[:, None]
    truth = z0 * 0.9 ** np.arange(10, 30)
    predicted = rollout(net, seed_window, 20)[:, 0]

    assert np.max(np.abs(predicted - truth) / truth) < 0.01


def test_train_lstm_is_deterministic():
    windows, targets = build_windows(_series([20, 20]), 4)
    config = LSTMConfig(hidden=[3], k=4, epochs=2, batch_size=8, log_every=0)

    _, first = train_lstm(build_lstm(3, 2, [3], 4, RandomStream(7)), windows / 40.0, targets / 40.0, config)
    _, second = train_lstm(build_lstm(3, 2, [3], 4, RandomStream(7)), windows / 40.0, targets / 40.0, config)

    assert first.losses == second.losses
    assert len(first.losses) == 3


def test_latent_csv_round_trip(tmp_path):
    series = _series([4, 3])
    path = str(tmp_path / 'latent.csv')

    write_latent_csv(series, path)
    loaded = read_latent_csv(path)

    assert np.array_equal(loaded.values, series.values)
    assert np.array_equal(loaded.trajectory, series.trajectory)
    assert loaded.steps.tolist() == [0, 1, 2, 3, 0, 1, 2]
    assert loaded.n_latent == 2


def test_latent_csv_missing_columns(tmp_path):
    path = tmp_path / 'latent.csv'
    path.write_text('a,b\n1,2\n')

    with pytest.raises(HromFormatError):
        read_latent_csv(str(path))


def test_surrogate_errors():
    data = trajectory_snapshots()
    model = build_model(Variant.POD, data, 2)
    net = build_lstm(3, 2, [4], 3, RandomStream(8))

    errors = surrogate_errors(model, net, data)

    assert [e.trajectory for e in errors] == [4, 5]
    assert [e.params for e in errors] == [(500.0,), (600.0,)]
    for error in errors:
        assert error.reconstruction == pytest.approx(0.0, abs=1e-18)
        assert error.total > 0.0
        assert error.lstm == error.total - error.reconstruction


def test_surrogate_errors_short_trajectory():
    data = trajectory_snapshots()
    model = build_model(Variant.POD, data, 2)
    net = build_lstm(3, 2, [4], 10, RandomStream(8))

    with pytest.raises(HromDomainError):
        surrogate_errors(model, net, data)
