import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from aenum import Enum, MultiValue, skip

from pyhrom.container import HromContainer, TensorEntry
from pyhrom.datasets.snapshots import SnapshotMatrix
from pyhrom.exceptions import HromConfigError, HromFormatError, HromValidationError
from pyhrom.models.pod import PODBasis, compute_pod
from pyhrom.nn import tape as ops
from pyhrom.nn.mlp import Activation, MLP, kaiming_init
from pyhrom.nn.params import ParamGroup, ParamStore
from pyhrom.nn.tape import Tensor
from pyhrom.numerics import RandomStream, as_matrix

log = logging.getLogger(__name__)


class _VariantConfig(NamedTuple):
    pod: bool
    networks: bool
    blend: bool


class Variant(Enum):
    """ Dimensionality-reduction variants. ``str()`` gives the name used in result tables. """

    _init_ = 'id fullname config'
    _settings_ = MultiValue

    POD = 0, 'POD', skip(_VariantConfig(pod=True, networks=False, blend=False))
    AE = 1, 'AE', skip(_VariantConfig(pod=False, networks=True, blend=False))
    SIMPLE_HYBRID = 2, 'SimpleHybrid', skip(_VariantConfig(pod=True, networks=True, blend=False))
    LWH = 3, 'LearnableWeightedHybrid', skip(_VariantConfig(pod=True, networks=True, blend=True))

    @classmethod
    def parse(cls, value) -> 'Variant':
        if isinstance(value, Variant):
            return value
        if isinstance(value, str):
            key = value.replace('_', '').replace('-', '').lower()
            for member in cls:
                if key in (member.fullname.lower(), member.name.replace('_', '').lower()):
                    return member
            raise HromConfigError(f"unknown variant '{value}'", field='variant')
        try:
            return cls(value)
        except ValueError:
            raise HromConfigError(f"unknown variant {value!r}", field='variant')

    @property
    def uses_pod(self) -> bool:
        return self.config.value.pod

    @property
    def uses_networks(self) -> bool:
        return self.config.value.networks

    @property
    def uses_blend(self) -> bool:
        return self.config.value.blend

    def __int__(self):
        return self.id

    def __str__(self):
        return self.fullname

    def __repr__(self):
        return f'<{self.__class__.__name__}.{self.fullname}: {self.id}>'


@dataclass
class ArchConfig:
    """ Hidden layer widths of the encoder (``None``: one layer of 2r units); the decoder mirrors them. """

    hidden: Optional[List[int]] = None
    activation: str = 'tanh'

    def __post_init__(self):
        if self.hidden is not None:
            self.hidden = [int(h) for h in self.hidden]
            if any(h < 1 for h in self.hidden):
                raise HromConfigError(f"hidden sizes must be positive, got {self.hidden}", field='hidden')
        try:
            Activation(self.activation)
        except ValueError:
            raise HromConfigError(f"unknown activation '{self.activation}'", field='activation')

    def hidden_sizes(self, r: int) -> List[int]:
        return [2 * r] if self.hidden is None else list(self.hidden)


class ParameterCount(NamedTuple):
    trainable: int
    fixed: int

    @property
    def total(self) -> int:
        return self.trainable + self.fixed


def blend(pod_part: Tensor, nn_part: Tensor, weights, n_components: int) -> Tensor:
    """
    ``pod_part * (1 - w) + nn_part * w`` with ``w`` (length Q) broadcast over the cells of cell-major features.
    """

    pod_part, nn_part = ops.as_tensor(pod_part), ops.as_tensor(nn_part)
    batch, features = pod_part.shape
    cells = (batch, features // n_components, n_components)
    mixed = ops.reshape(pod_part, cells) * (1.0 - weights) + ops.reshape(nn_part, cells) * weights
    return ops.reshape(mixed, (batch, features))


@HromContainer.record_kind('hybrid')
class HybridAutoencoder(HromContainer):
    """
    Variant-tagged autoencoder.

    Encoder ``z = (1 - a) * x Ur + a * enc(x)`` and decoder ``x^ = (z Ur^T) * (1 - b) + dec(z) * b`` for the
    learnable weighted hybrid, with the simple hybrid summing both branches and POD / AE keeping one of them.
    The POD basis is stored as a fixed tensor. ``a`` and ``b`` start at zero.
    """

    def __init__(self,
                 variant,
                 n_cells: int,
                 n_components: int,
                 r: int,
                 arch: Optional[ArchConfig] = None,
                 pod: Optional[PODBasis] = None,
                 mean=None,
                 std=None):
        self._variant = Variant.parse(variant)
        self._n, self._q, self._r = int(n_cells), int(n_components), int(r)
        self._arch = ArchConfig() if arch is None else arch
        features = self._n * self._q

        if self._r < 1:
            raise HromConfigError("rank must be positive", field='r')

        self.store = ParamStore()
        self.pod = None
        self.encoder = None
        self.decoder = None
        self.a = None
        self.b = None

        if self._variant.uses_pod:
            if pod is None:
                raise HromConfigError(f"variant {self._variant} needs a POD basis", field='pod')
            if pod.Ur.shape != (features, self._r):
                raise HromConfigError(f"POD basis of shape {pod.Ur.shape} does not match ({features}, {self._r})",
                                      field='pod')
            self.pod = pod
            self.store.add('pod.basis', pod.Ur, ParamGroup.FIXED)

        if self._variant.uses_networks:
            hidden = self._arch.hidden_sizes(self._r)
            act = Activation(self._arch.activation)
            self.encoder = MLP([features] + hidden + [self._r], [act] * len(hidden) + [Activation.LINEAR],
                               self.store, 'encoder')
            self.decoder = MLP([self._r] + hidden[::-1] + [features], [act] * len(hidden) + [Activation.LINEAR],
                               self.store, 'decoder')

        if self._variant.uses_blend:
            self.a = self.store.add('blend.a', np.zeros(self._r), ParamGroup.BLEND)
            self.b = self.store.add('blend.b', np.zeros(self._q), ParamGroup.BLEND)

        self.mean = np.zeros(features) if mean is None else np.asarray(mean, dtype=np.float64)
        self.std = np.ones(features) if std is None else np.asarray(std, dtype=np.float64)

    @property
    def variant(self) -> Variant:
        return self._variant

    @property
    def N(self) -> int:
        return self._n

    @property
    def Q(self) -> int:
        return self._q

    @property
    def r(self) -> int:
        return self._r

    @property
    def features(self) -> int:
        return self._n * self._q

    @property
    def arch(self) -> ArchConfig:
        return self._arch

    @property
    def basis(self) -> Optional[np.ndarray]:
        return None if self.pod is None else self.store['pod.basis'].value

    # Branches, recorded on the active tape

    def pod_encode(self, x) -> Tensor:
        return ops.as_tensor(x) @ self.basis

    def pod_decode(self, z) -> Tensor:
        return ops.as_tensor(z) @ self.basis.T

    def nn_encode(self, x) -> Tensor:
        return self.encoder(x)

    def nn_decode(self, z) -> Tensor:
        return self.decoder(z)

    def encode(self, x) -> Tensor:
        x = self._check(x, self.features, "x")
        if self._variant is Variant.POD:
            return self.pod_encode(x)
        if self._variant is Variant.AE:
            return self.nn_encode(x)
        if self._variant is Variant.SIMPLE_HYBRID:
            return self.pod_encode(x) + self.nn_encode(x)
        return self.pod_encode(x) * (1.0 - self.a) + self.nn_encode(x) * self.a

    def decode(self, z) -> Tensor:
        z = self._check(z, self._r, "z")
        if self._variant is Variant.POD:
            return self.pod_decode(z)
        if self._variant is Variant.AE:
            return self.nn_decode(z)
        if self._variant is Variant.SIMPLE_HYBRID:
            return self.pod_decode(z) + self.nn_decode(z)
        return blend(self.pod_decode(z), self.nn_decode(z), self.b, self._q)

    def forward(self, x) -> Tensor:
        return self.decode(self.encode(x))

    __call__ = forward

    @staticmethod
    def _check(values, width: int, name: str):
        if isinstance(values, Tensor):
            if values.ndim != 2 or values.shape[1] != width:
                raise HromValidationError(f"{name} must have {width} columns, got shape {values.shape}")
            return values
        values = as_matrix(values, name)
        if values.shape[1] != width:
            raise HromValidationError(f"{name} must have {width} columns, got {values.shape[1]}")
        return values

    def count_parameters(self) -> ParameterCount:
        return ParameterCount(self.store.count(trainable_only=True),
                              self.store.count() - self.store.count(trainable_only=True))

    @classmethod
    def from_parts(cls, meta: dict, tensors: 'OrderedDict[str, TensorEntry]') -> 'HybridAutoencoder':
        try:
            arch = ArchConfig(hidden=meta['hidden'], activation=meta['activation'])
            pod = None
            if 'pod.basis' in tensors:
                pod = PODBasis(tensors['pod.basis'][0], tensors['pod.singular_values'][0],
                               tensors['mean'][0], tensors['std'][0])
            model = cls(meta['variant'], meta['N'], meta['Q'], meta['r'], arch, pod,
                        tensors['mean'][0], tensors['std'][0])
            model.store.load_state(OrderedDict((name, tensors[name][0]) for name in model.store.names()))
        except KeyError as e:
            raise HromFormatError(f"hybrid checkpoint misses {e}")
        return model

    def _container_meta(self) -> dict:
        return {'variant': str(self._variant), 'N': self._n, 'Q': self._q, 'r': self._r,
                'hidden': self._arch.hidden_sizes(self._r), 'activation': str(Activation(self._arch.activation))}

    def _container_tensors(self) -> 'OrderedDict[str, TensorEntry]':
        tensors = OrderedDict((name, (p.value, p.group.value)) for name, p in self.store.items())
        if self.pod is not None:
            tensors['pod.singular_values'] = (self.pod.singular_values, 'stats')
        tensors['mean'] = (self.mean, 'stats')
        tensors['std'] = (self.std, 'stats')
        return tensors

    def __repr__(self):
        return f'<HybridAutoencoder({self._variant}): N={self._n}, Q={self._q}, r={self._r}, ' \
               f'parameters={self.count_parameters().total}>'


def build_model(variant,
                data: SnapshotMatrix,
                r: int,
                arch: Optional[ArchConfig] = None,
                stream: Optional[RandomStream] = None) -> HybridAutoencoder:
    """
    Builds a model for ``data``: POD basis from the train split when the variant needs one, Kaiming-initialized
    networks, zero blend weights.

    :raises HromConfigError: invalid architecture.
    :raises HromDomainError: rank too large for the data.
    """

    variant = Variant.parse(variant)
    stream = RandomStream(0) if stream is None else stream
    pod = compute_pod(data, r) if variant.uses_pod else None

    model = HybridAutoencoder(variant, data.N, data.Q, r, arch, pod, data.mean, data.std)
    if variant.uses_networks:
        kaiming_init(model.encoder, stream)
        kaiming_init(model.decoder, stream)
    return model


def count_parameters(model: HybridAutoencoder) -> ParameterCount:
    return model.count_parameters()


def hybrid_encode(model: HybridAutoencoder, x) -> np.ndarray:
    return model.encode(x).value


def hybrid_decode(model: HybridAutoencoder, z) -> np.ndarray:
    return model.decode(z).value


def reconstruct(model: HybridAutoencoder, x) -> np.ndarray:
    return model.forward(x).value
