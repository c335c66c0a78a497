"""
Versioned binary container shared by model checkpoints and dataset files.

Layout::

    PYHROM <kind> <version>\\n          ASCII line
    <header length>                    8 bytes, unsigned little-endian
    <manifest>                         canonical CBOR map {'meta': {...}, 'tensors': [[name, shape, tag], ...]}
    <payloads>                         little-endian float64, C order, in manifest order

Concrete containers register themselves with :meth:`HromContainer.record_kind`; :meth:`HromContainer.from_bytes`
dispatches on the kind found in the first line.
"""

import abc
import struct
from collections import OrderedDict
from typing import Dict, List, NamedTuple, Tuple, TypeVar

import cbor2
import numpy as np

from pyhrom.exceptions import HromFormatError

MAGIC = 'PYHROM'

TensorEntry = Tuple[np.ndarray, str]


class Manifest(NamedTuple):
    kind: str
    version: int
    meta: dict
    tensors: List[Tuple[str, Tuple[int, ...], str]]


class HromContainer(metaclass=abc.ABCMeta):
    """ Parent class of everything that can be written to and read back from a container. """

    # private dictionary to record all container kinds dynamically
    _CONTAINER_KIND = {}

    kind: str = ''
    version: int = 1

    @classmethod
    def record_kind(cls, kind: str):
        """ Decorator to record all container kinds dynamically. """

        def decorator(the_class):
            if not issubclass(the_class, HromContainer):
                raise ValueError("Can only decorate subclass of HromContainer")
            the_class.kind = kind
            cls._CONTAINER_KIND[kind] = the_class
            return the_class

        return decorator

    @classmethod
    def from_bytes(cls, received: bytes) -> 'HC':
        """
        Decodes a container based on the kind in its first line.

        :param received: encoded container.
        :raises HromFormatError: malformed container, unknown kind or unsupported version.
        :returns: an initialized container object of the recorded class.
        """

        manifest, tensors = _split(received)
        try:
            the_class = cls._CONTAINER_KIND[manifest.kind]
        except KeyError:
            raise HromFormatError(f"unknown container kind '{manifest.kind}'")
        if manifest.version > the_class.version:
            raise HromFormatError(f"{manifest.kind} container version {manifest.version} is newer than the "
                                  f"supported version {the_class.version}")
        return the_class.from_parts(manifest.meta, tensors)

    @classmethod
    def load(cls, path: str) -> 'HC':
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read())

    def save(self, path: str) -> None:
        with open(path, 'wb') as f:
            f.write(self.to_bytes())

    def to_bytes(self) -> bytes:
        return encode_container(self.kind, self.version, self._container_meta(), self._container_tensors())

    @classmethod
    @abc.abstractmethod
    def from_parts(cls, meta: dict, tensors: 'OrderedDict[str, TensorEntry]') -> 'HC':
        raise NotImplementedError

    @abc.abstractmethod
    def _container_meta(self) -> dict:
        raise NotImplementedError

    @abc.abstractmethod
    def _container_tensors(self) -> 'OrderedDict[str, TensorEntry]':
        raise NotImplementedError


HC = TypeVar('HC', bound=HromContainer)


def encode_container(kind: str, version: int, meta: dict, tensors: Dict[str, TensorEntry]) -> bytes:
    if not kind or ' ' in kind or '\n' in kind:
        raise HromFormatError(f"invalid container kind '{kind}'")

    manifest = {
        'meta': meta,
        'tensors': [[name, list(np.shape(value)), tag] for name, (value, tag) in tensors.items()]
    }
    header = cbor2.dumps(manifest, canonical=True)

    parts = [f'{MAGIC} {kind} {int(version)}\n'.encode('ascii'), struct.pack('<Q', len(header)), header]
    for value, _ in tensors.values():
        parts.append(np.ascontiguousarray(value, dtype='<f8').tobytes())
    return b''.join(parts)


def read_manifest(received: bytes) -> Manifest:
    """ Parses the first line and the CBOR manifest without touching the payloads. """

    manifest, _ = _split(received, with_payload=False)
    return manifest


def _split(received: bytes, with_payload: bool = True):
    if not isinstance(received, (bytes, bytearray)):
        raise HromFormatError("a container must be decoded from bytes")

    newline = received.find(b'\n', 0, 128)
    if newline < 0:
        raise HromFormatError("missing container header line")
    try:
        magic, kind, version = received[:newline].decode('ascii').split(' ')
        version = int(version)
    except ValueError:
        raise HromFormatError("malformed container header line")
    if magic != MAGIC:
        raise HromFormatError(f"bad magic '{magic}'")

    offset = newline + 1
    if len(received) < offset + 8:
        raise HromFormatError("truncated container")
    (length,) = struct.unpack_from('<Q', received, offset)
    offset += 8

    try:
        body = cbor2.loads(bytes(received[offset:offset + length]))
        meta = body['meta']
        entries = [(str(name), tuple(int(s) for s in shape), str(tag)) for name, shape, tag in body['tensors']]
    except (cbor2.CBORDecodeError, KeyError, TypeError, ValueError):
        raise HromFormatError("malformed container manifest")
    offset += length

    manifest = Manifest(kind, version, meta, entries)
    if not with_payload:
        return manifest, None

    tensors = OrderedDict()
    for name, shape, tag in entries:
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 8 * size
        if end > len(received):
            raise HromFormatError(f"truncated payload for tensor '{name}'")
        tensors[name] = (np.frombuffer(received, dtype='<f8', count=size, offset=offset)
                         .astype(np.float64).reshape(shape), tag)
        offset = end
    if offset != len(received):
        raise HromFormatError("trailing bytes after the last payload")

    return manifest, tensors
