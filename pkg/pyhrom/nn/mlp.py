from typing import Any, Callable, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from aenum import Enum, MultiValue, skip

from pyhrom.exceptions import HromConfigError, HromValidationError
from pyhrom.nn import tape as ops
from pyhrom.nn.params import ParamGroup, Parameter, ParamStore
from pyhrom.nn.tape import Tensor
from pyhrom.numerics import RandomStream


class _ActivationConfig(NamedTuple):
    fn: Callable[[Any], Tensor]
    raw: Callable[[np.ndarray], np.ndarray]


def _identity(x):
    return ops.as_tensor(x)


class Activation(Enum):
    _init_ = 'id fullname config'
    _settings_ = MultiValue

    LINEAR = 0, 'linear', skip(_ActivationConfig(fn=_identity, raw=lambda v: v))
    TANH = 1, 'tanh', skip(_ActivationConfig(fn=ops.tanh, raw=np.tanh))
    SILU = 2, 'silu', skip(_ActivationConfig(fn=ops.silu, raw=lambda v: v / (1.0 + np.exp(-v))))
    RELU = 3, 'relu', skip(_ActivationConfig(fn=ops.relu, raw=lambda v: np.maximum(v, 0.0)))

    def __int__(self):
        return self.id

    def __str__(self):
        return self.fullname

    def __repr__(self):
        return f'<{self.__class__.__name__}.{self.fullname}: {self.id}>'

    def __call__(self, x) -> Tensor:
        return self.config.value.fn(x)

    def raw(self, v: np.ndarray) -> np.ndarray:
        """ Plain numpy evaluation, without recording. """

        return self.config.value.raw(v)


ActivationLike = Union[Activation, str, int]


class MLP:
    """
    Fully-connected network ``x -> act_L(... act_1(x @ W_1 + b_1) ...)``.

    Weights have shape ``(fan_in, fan_out)`` and are stored in a :class:`ParamStore` under
    ``<prefix>.<layer>.weight`` / ``<prefix>.<layer>.bias``. The last activation must be linear.
    """

    def __init__(self,
                 sizes: Sequence[int],
                 activations: Sequence[ActivationLike],
                 store: Optional[ParamStore] = None,
                 prefix: str = 'mlp',
                 group: ParamGroup = ParamGroup.NETWORK):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise HromConfigError("an MLP needs at least an input and an output size", field='sizes')
        if any(s < 1 for s in sizes):
            raise HromConfigError(f"layer sizes must be positive, got {sizes}", field='sizes')
        if len(activations) != len(sizes) - 1:
            raise HromConfigError(f"expected {len(sizes) - 1} activations, got {len(activations)}",
                                  field='activations')

        try:
            activations = [a if isinstance(a, Activation) else Activation(a) for a in activations]
        except ValueError as e:
            raise HromConfigError(f"unknown activation: {e}", field='activations')
        if activations[-1] is not Activation.LINEAR:
            raise HromConfigError("the final layer must be linear", field='activations')

        self._sizes = sizes
        self._activations = activations
        self._prefix = prefix
        self.store = store if store is not None else ParamStore()

        self.weights: List[Parameter] = []
        self.biases: List[Parameter] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.weights.append(self.store.add(f'{prefix}.{i}.weight', np.zeros((fan_in, fan_out)), group))
            self.biases.append(self.store.add(f'{prefix}.{i}.bias', np.zeros(fan_out), group))

    @property
    def sizes(self) -> List[int]:
        return list(self._sizes)

    @property
    def activations(self) -> List[Activation]:
        return list(self._activations)

    @property
    def in_features(self) -> int:
        return self._sizes[0]

    @property
    def out_features(self) -> int:
        return self._sizes[-1]

    @property
    def prefix(self) -> str:
        return self._prefix

    def parameters(self) -> List[Parameter]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def count(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in zip(self._sizes[:-1], self._sizes[1:]))

    def __call__(self, batch) -> Tensor:
        return mlp_forward(self, batch)

    def __repr__(self):
        layers = ' -> '.join(str(s) for s in self._sizes)
        acts = ', '.join(str(a) for a in self._activations)
        return f'<MLP({self._prefix}): {layers} [{acts}]>'


def mlp_forward(net: MLP, batch) -> Tensor:
    """
    Evaluates ``net`` on a batch of row vectors.

    Recorded on the active :class:`~pyhrom.nn.tape.Tape`, if any.

    :param net: the network.
    :param batch: B x in_features array or tensor.
    :raises HromValidationError: the batch width does not match the first layer.
    :returns: B x out_features tensor.
    """

    x = ops.as_tensor(batch)
    if x.ndim != 2 or x.shape[1] != net.in_features:
        raise HromValidationError(f"expected a batch with {net.in_features} columns, got shape {x.shape}")

    for weight, bias, act in zip(net.weights, net.biases, net.activations):
        x = act(x @ weight + bias)
    return x


def kaiming_init(net: MLP, stream: RandomStream) -> None:
    """ Weights drawn from N(0, 2 / fan_in), biases set to zero. """

    for weight, bias in zip(net.weights, net.biases):
        fan_in = weight.shape[0]
        weight.assign(stream.normal(0.0, np.sqrt(2.0 / fan_in), weight.shape))
        bias.assign(np.zeros(bias.shape))
