import numpy as np
import pytest
from pytest import mark

from pyhrom.container import HromContainer
from pyhrom.exceptions import HromConfigError, HromDomainError, HromValidationError
from pyhrom.models.hybrid import ArchConfig, HybridAutoencoder, Variant, blend, build_model, count_parameters, \
    hybrid_decode, hybrid_encode, reconstruct
from pyhrom.models.pod import PODBasis, compute_pod
from pyhrom.nn.gradcheck import gradient_check
from pyhrom.nn.tape import Tensor
from pyhrom.numerics import RandomStream, frobenius_norm, orthonormal_columns
from pyhrom.training import mse_loss
from tests.conftest import low_rank_snapshots


@mark.parametrize("value, expected",
                  [
                      ('POD', Variant.POD),
                      ('ae', Variant.AE),
                      ('SimpleHybrid', Variant.SIMPLE_HYBRID),
                      ('simple-hybrid', Variant.SIMPLE_HYBRID),
                      ('LearnableWeightedHybrid', Variant.LWH),
                      ('lwh', Variant.LWH),
                      (3, Variant.LWH),
                      (Variant.AE, Variant.AE),
                  ], ids=['parse_pod', 'parse_ae', 'parse_simple', 'parse_simple_dash', 'parse_lwh_full',
                          'parse_lwh_short', 'parse_id', 'parse_member'])
def test_variant_parse(value, expected):
    assert Variant.parse(value) is expected


def test_variant_parse_unknown():
    with pytest.raises(HromConfigError) as except_info:
        Variant.parse('transformer')

    assert except_info.value.field == 'variant'


def test_variant_names():
    assert [str(v) for v in Variant] == ['POD', 'AE', 'SimpleHybrid', 'LearnableWeightedHybrid']
    assert Variant.LWH.uses_pod and Variant.LWH.uses_networks and Variant.LWH.uses_blend
    assert not Variant.SIMPLE_HYBRID.uses_blend
    assert not Variant.AE.uses_pod


def _count_model(variant: Variant, grid: int, rank: int) -> HybridAutoencoder:
    pod = PODBasis(np.zeros((grid, rank)), np.zeros(rank)) if variant.uses_pod else None
    return HybridAutoencoder(variant, grid, 1, rank, pod=pod)


def test_parameter_counts(parameter_count_case):
    grid, rank = parameter_count_case['grid'], parameter_count_case['rank']

    for name, expected in parameter_count_case['counts'].items():
        variant = Variant.parse(name)
        count = count_parameters(_count_model(variant, grid, rank))

        assert count.total == expected, name
        assert count.fixed == (grid * rank if variant.uses_pod else 0)


def test_parameter_counts_per_component():
    pod = PODBasis(np.zeros((40, 3)), np.zeros(3))

    count = HybridAutoencoder(Variant.LWH, 20, 2, 3, pod=pod).count_parameters()
    simple = HybridAutoencoder(Variant.SIMPLE_HYBRID, 20, 2, 3, pod=pod).count_parameters()

    assert count.total - simple.total == 3 + 2


@mark.parametrize("fields, field",
                  [
                      ({'hidden': [0]}, 'hidden'),
                      ({'activation': 'gelu'}, 'activation'),
                  ], ids=['arch_hidden', 'arch_activation'])
def test_arch_config_invalid(fields, field):
    with pytest.raises(HromConfigError) as except_info:
        ArchConfig(**fields)

    assert except_info.value.field == field


def test_arch_config_default_hidden():
    assert ArchConfig().hidden_sizes(7) == [14]
    assert ArchConfig(hidden=[30, 20]).hidden_sizes(7) == [30, 20]


def test_model_needs_matching_basis():
    with pytest.raises(HromConfigError) as except_info:
        HybridAutoencoder(Variant.POD, 10, 1, 2)
    assert except_info.value.field == 'pod'

    with pytest.raises(HromConfigError):
        HybridAutoencoder(Variant.LWH, 10, 1, 2, pod=PODBasis(np.zeros((10, 3)), np.zeros(3)))


def test_lwh_encode_decode_by_hand():
    model = HybridAutoencoder(Variant.LWH, 2, 1, 1, pod=PODBasis([[1.0], [0.0]], [1.0, 0.0]))
    model.store['encoder.1.bias'].assign([3.0])
    model.store['decoder.1.bias'].assign([6.0, 4.0])
    model.a.assign([0.5])
    model.b.assign([0.25])

    assert hybrid_encode(model, [[1.0, 0.0]]) == pytest.approx([[2.0]])
    assert hybrid_decode(model, [[2.0]]) == pytest.approx([[3.0, 1.0]])


def test_blend_is_cell_major():
    pod_part = Tensor([[1.0, 2.0, 3.0, 4.0]])
    nn_part = Tensor([[5.0, 6.0, 7.0, 8.0]])

    mixed = blend(pod_part, nn_part, np.array([0.0, 1.0]), 2)

    assert mixed.value.tolist() == [[1.0, 6.0, 3.0, 8.0]]


@mark.numerics
def test_pod_projector():
    data = low_rank_snapshots(noise=0.1)
    pod = compute_pod(data, 3)
    projector = pod.Ur @ pod.Ur.T

    assert pod.Ur.T @ pod.Ur == pytest.approx(np.eye(3), abs=1e-10)
    assert projector @ projector == pytest.approx(projector, abs=1e-10)
    assert pod.project(pod.project(data.test)) == pytest.approx(pod.project(data.test), abs=1e-10)
    assert np.all(np.diff(pod.singular_values) <= 0)


@mark.numerics
def test_pod_train_error_is_tail_energy():
    data = low_rank_snapshots(noise=0.2)

    for r in (1, 2, 4):
        pod = compute_pod(data, r)
        error = frobenius_norm(data.train - pod.project(data.train)) ** 2

        assert error == pytest.approx(pod.tail_energy(), rel=1e-9)


@mark.numerics
def test_pod_beats_random_basis():
    data = low_rank_snapshots(noise=0.3)
    pod = compute_pod(data, 2)
    stream = RandomStream(21)

    best = frobenius_norm(data.train - pod.project(data.train))
    for i in range(20):
        q = orthonormal_columns(stream.child(i), data.features, 2)
        assert best <= frobenius_norm(data.train - data.train @ q @ q.T) + 1e-12


@mark.numerics
def test_pod_exact_for_low_rank_data():
    data = low_rank_snapshots(rank=3)

    model = build_model(Variant.POD, data, 3)

    assert reconstruct(model, data.test) == pytest.approx(data.test, abs=1e-9)


@mark.parametrize("r", [0, 43, 2.5], ids=['rank_zero', 'rank_too_large', 'rank_float'])
def test_pod_rank_out_of_range(r):
    with pytest.raises(HromDomainError):
        compute_pod(low_rank_snapshots(), r)


def test_pod_dimension_mismatch():
    pod = compute_pod(low_rank_snapshots(), 2)

    with pytest.raises(HromValidationError):
        pod.encode(np.ones((2, 5)))
    with pytest.raises(HromValidationError):
        pod.decode(np.ones((2, 3)))


def test_lwh_at_zero_weights_equals_pod(snapshots):
    lwh = build_model(Variant.LWH, snapshots, 2, stream=RandomStream(4))
    pod = build_model(Variant.POD, snapshots, 2)

    assert np.array_equal(reconstruct(lwh, snapshots.test), reconstruct(pod, snapshots.test))
    assert np.array_equal(hybrid_encode(lwh, snapshots.test), hybrid_encode(pod, snapshots.test))


def test_simple_hybrid_with_silent_networks_equals_pod(snapshots):
    model = build_model(Variant.SIMPLE_HYBRID, snapshots, 2, stream=RandomStream(4))
    for net in (model.encoder, model.decoder):
        net.weights[-1].assign(np.zeros(net.weights[-1].shape))
    pod = build_model(Variant.POD, snapshots, 2)

    assert np.array_equal(reconstruct(model, snapshots.test), reconstruct(pod, snapshots.test))


def test_autoencoder_with_zero_output_layer(snapshots):
    model = build_model(Variant.AE, snapshots, 2, ArchConfig(hidden=[8], activation='silu'), RandomStream(1))
    model.decoder.weights[-1].assign(np.zeros(model.decoder.weights[-1].shape))

    assert np.all(reconstruct(model, snapshots.test) == 0.0)


def test_model_shapes_and_validation(snapshots):
    model = build_model(Variant.AE, snapshots, 3, stream=RandomStream(1))

    assert hybrid_encode(model, snapshots.test).shape == (snapshots.test.shape[0], 3)
    assert reconstruct(model, snapshots.test).shape == snapshots.test.shape
    with pytest.raises(HromValidationError):
        hybrid_encode(model, np.ones((2, 7)))
    with pytest.raises(HromValidationError):
        hybrid_decode(model, np.ones((2, 2)))


def test_build_model_deterministic(snapshots):
    first = build_model(Variant.LWH, snapshots, 3, stream=RandomStream(9))
    second = build_model(Variant.LWH, snapshots, 3, stream=RandomStream(9))
    other = build_model(Variant.LWH, snapshots, 3, stream=RandomStream(10))

    assert first.to_bytes() == second.to_bytes()
    assert first.to_bytes() != other.to_bytes()


@mark.numerics
def test_blend_gradients_at_zero(snapshots):
    model = build_model(Variant.LWH, snapshots, 2, stream=RandomStream(2))
    x = snapshots.train[:8]

    report = gradient_check(lambda: mse_loss(Tensor(x), model.forward(x)), model.store.trainable())

    assert report.passed, report


@mark.numerics
def test_blend_gradients_multi_component():
    data = low_rank_snapshots(features=12, n_components=3)
    model = build_model(Variant.LWH, data, 2, stream=RandomStream(3))
    model.a.assign([0.3, -0.2])
    model.b.assign([0.1, 0.5, 0.9])
    x = data.train[:6]

    report = gradient_check(lambda: mse_loss(Tensor(x), model.forward(x)), [model.a, model.b])

    assert report.passed, report


def test_checkpoint_round_trip(snapshots):
    model = build_model(Variant.LWH, snapshots, 3, ArchConfig(hidden=[10, 5]), RandomStream(5))
    model.a.assign([0.1, 0.2, 0.3])
    model.b.assign([0.4])

    loaded = HromContainer.from_bytes(model.to_bytes())

    assert loaded.variant is Variant.LWH
    assert loaded.arch.hidden == [10, 5]
    assert np.array_equal(reconstruct(loaded, snapshots.test), reconstruct(model, snapshots.test))
    assert np.array_equal(loaded.pod.singular_values, model.pod.singular_values)
