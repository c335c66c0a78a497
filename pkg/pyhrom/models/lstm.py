from collections import OrderedDict
from typing import List, Optional, Sequence, Tuple

import numpy as np

from pyhrom.container import HromContainer, TensorEntry
from pyhrom.exceptions import HromConfigError, HromFormatError, HromValidationError
from pyhrom.nn import tape as ops
from pyhrom.nn.mlp import Activation, MLP, kaiming_init
from pyhrom.nn.params import Parameter, ParamStore
from pyhrom.nn.tape import Tensor
from pyhrom.numerics import RandomStream

GATES = ('input', 'forget', 'output', 'candidate')


class LSTMCell:
    """ Gate weights of shape (hidden, input + hidden) acting on ``[x, h]``, one bias per gate. """

    def __init__(self, input_size: int, hidden_size: int, store: ParamStore, prefix: str):
        if input_size < 1 or hidden_size < 1:
            raise HromConfigError("LSTM sizes must be positive", field='hidden')
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.weights = {gate: store.add(f'{prefix}.{gate}.weight', np.zeros((hidden_size, input_size + hidden_size)))
                        for gate in GATES}
        self.biases = {gate: store.add(f'{prefix}.{gate}.bias', np.zeros(hidden_size)) for gate in GATES}

    def parameters(self) -> List[Parameter]:
        return [p for gate in GATES for p in (self.weights[gate], self.biases[gate])]

    def reset_parameters(self, stream: RandomStream) -> None:
        bound = 1.0 / np.sqrt(self.hidden_size)
        for p in self.parameters():
            p.assign(stream.uniform(-bound, bound, p.shape))

    def _gate(self, xh: Tensor, gate: str) -> Tensor:
        return xh @ ops.transpose(self.weights[gate]) + self.biases[gate]


def lstm_step(cell: LSTMCell, x_t, h, c) -> Tuple[Tensor, Tensor]:
    """
    ``c' = f * c + i * g`` and ``h' = o * tanh(c')`` with sigmoid gates ``i, f, o`` and tanh candidate ``g``.
    """

    xh = ops.concat([x_t, h], axis=1)
    if xh.shape[1] != cell.input_size + cell.hidden_size:
        raise HromValidationError(f"LSTM cell expects {cell.input_size} inputs and {cell.hidden_size} hidden units, "
                                  f"got {xh.shape[1]} columns")
    i = ops.sigmoid(cell._gate(xh, 'input'))
    f = ops.sigmoid(cell._gate(xh, 'forget'))
    o = ops.sigmoid(cell._gate(xh, 'output'))
    g = ops.tanh(cell._gate(xh, 'candidate'))
    c_next = f * c + i * g
    return o * ops.tanh(c_next), c_next


@HromContainer.record_kind('lstm')
class LSTMNet(HromContainer):
    """
    Stacked LSTM cells with a linear head mapping the top hidden state to the next latent vector.

    A forward pass consumes ``k`` augmented latent vectors from a zero state.
    """

    def __init__(self, input_size: int, output_size: int, hidden: Sequence[int] = (40, 40), k: int = 10):
        hidden = [int(h) for h in hidden]
        if not hidden:
            raise HromConfigError("an LSTM needs at least one layer", field='hidden')
        if k < 1:
            raise HromConfigError("look-back window must be at least 1", field='k')
        if output_size < 1 or output_size > input_size:
            raise HromConfigError("output size must lie in [1, input size]", field='output_size')

        self.input_size, self.output_size, self.k = int(input_size), int(output_size), int(k)
        self.hidden = hidden
        self.store = ParamStore()
        sizes = [self.input_size] + hidden
        self.cells = [LSTMCell(sizes[i], sizes[i + 1], self.store, f'lstm.{i}') for i in range(len(hidden))]
        self.head = MLP([hidden[-1], self.output_size], [Activation.LINEAR], self.store, 'head')

    @property
    def n_params(self) -> int:
        return self.input_size - self.output_size

    def reset_parameters(self, stream: RandomStream) -> None:
        for i, cell in enumerate(self.cells):
            cell.reset_parameters(stream.child(i))
        kaiming_init(self.head, stream.child(len(self.cells)))

    def forward(self, windows) -> Tensor:
        """
        :param windows: B x k' x input_size array (k' is usually ``k``).
        :returns: B x output_size predictions of the next latent vector.
        """

        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[2] != self.input_size:
            raise HromValidationError(f"expected windows of shape (B, k, {self.input_size}), got {windows.shape}")

        batch = windows.shape[0]
        state = [(np.zeros((batch, cell.hidden_size)), np.zeros((batch, cell.hidden_size))) for cell in self.cells]
        for t in range(windows.shape[1]):
            x = windows[:, t, :]
            for layer, cell in enumerate(self.cells):
                h, c = lstm_step(cell, x, *state[layer])
                state[layer] = (h, c)
                x = h
        return self.head(state[-1][0])

    __call__ = forward

    @classmethod
    def from_parts(cls, meta: dict, tensors: 'OrderedDict[str, TensorEntry]') -> 'LSTMNet':
        try:
            net = cls(meta['input_size'], meta['output_size'], meta['hidden'], meta['k'])
            net.store.load_state(OrderedDict((name, tensors[name][0]) for name in net.store.names()))
        except KeyError as e:
            raise HromFormatError(f"lstm checkpoint misses {e}")
        return net

    def _container_meta(self) -> dict:
        return {'input_size': self.input_size, 'output_size': self.output_size, 'hidden': self.hidden, 'k': self.k}

    def _container_tensors(self) -> 'OrderedDict[str, TensorEntry]':
        return OrderedDict((name, (p.value, p.group.value)) for name, p in self.store.items())

    def __repr__(self):
        return f'<LSTMNet: {self.input_size} -> {self.hidden} -> {self.output_size}, k={self.k}>'


def build_lstm(input_size: int, output_size: int, hidden: Sequence[int] = (40, 40), k: int = 10,
               stream: Optional[RandomStream] = None) -> LSTMNet:
    net = LSTMNet(input_size, output_size, hidden, k)
    net.reset_parameters(RandomStream(0) if stream is None else stream)
    return net
