from collections import OrderedDict
from enum import Enum, unique
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from pyhrom.exceptions import HromConfigError
from pyhrom.nn.tape import Tensor


@unique
class ParamGroup(Enum):
    """ Optimizer groups. Tensors of the FIXED group are stored and checkpointed but never trained. """

    NETWORK = 'network'
    BLEND = 'blend'
    FREQUENCY = 'frequency'
    FIXED = 'fixed'


class Parameter(Tensor):
    def __init__(self, value, name: str, group: ParamGroup = ParamGroup.NETWORK):
        group = ParamGroup(group)
        super().__init__(np.array(value, dtype=np.float64), requires_grad=group is not ParamGroup.FIXED, name=name)
        self.group = group
        self.grad = np.zeros_like(self.value)

    def assign(self, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.value.shape:
            raise HromConfigError(f"cannot assign shape {value.shape} to parameter '{self.name}' of shape "
                                  f"{self.value.shape}", field=self.name)
        self.value[...] = value

    def __repr__(self):
        return f'<Parameter({self.name}): shape={self.shape}, group={self.group.value}>'


class ParamStore:
    """ Named tensors, their gradient buffers and their optimizer group, in insertion order. """

    def __init__(self):
        self._params: 'OrderedDict[str, Parameter]' = OrderedDict()

    def add(self, name: str, value, group: ParamGroup = ParamGroup.NETWORK) -> Parameter:
        if name in self._params:
            raise HromConfigError(f"duplicate parameter name '{name}'", field=name)
        param = Parameter(value, name, group)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params.keys())

    def items(self) -> List[Tuple[str, Parameter]]:
        return list(self._params.items())

    def trainable(self, groups: Optional[Tuple[ParamGroup, ...]] = None) -> List[Parameter]:
        return [p for p in self._params.values()
                if p.group is not ParamGroup.FIXED and (groups is None or p.group in groups)]

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def count(self, trainable_only: bool = False) -> int:
        params = self.trainable() if trainable_only else self._params.values()
        return int(sum(p.value.size for p in params))

    def state(self) -> Dict[str, np.ndarray]:
        """ Copy of every tensor, keyed by name. """

        return OrderedDict((name, p.value.copy()) for name, p in self._params.items())

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        for name, value in state.items():
            self._params[name].assign(value)

    def flat_trainable(self) -> np.ndarray:
        params = self.trainable()
        if not params:
            return np.zeros(0)
        return np.concatenate([p.value.ravel() for p in params])

    def flat_grads(self) -> np.ndarray:
        params = self.trainable()
        if not params:
            return np.zeros(0)
        return np.concatenate([p.grad.ravel() for p in params])

    def assign_flat_trainable(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.trainable():
            p.value[...] = flat[offset:offset + p.value.size].reshape(p.value.shape)
            offset += p.value.size

    def __repr__(self):
        return f'<ParamStore: {len(self)} tensors, {self.count()} values>'
