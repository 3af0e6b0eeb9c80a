"""Binary checkpoint format.

Layout: magic ``PFRP``, format version as little-endian u32, then one record
per named array until end of file: u32 name length, UTF-8 name, u32 rank,
rank x u32 dims, little-endian float64 values in C order.
"""
import io
import logging
import os
import struct
from typing import BinaryIO, Dict

import numpy as np

from ..core.errors import CheckpointError, InvalidArgumentError
from ..core.numerics import Tensor
from .model import ModelParams

logger = logging.getLogger(__name__)

MAGIC = b'PFRP'
FORMAT_VERSION = 1
_U32 = struct.Struct('<I')


def encode_arrays(arrays: Dict[str, np.ndarray]) -> bytes:
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(_U32.pack(FORMAT_VERSION))
    for name, array in arrays.items():
        encoded = name.encode('utf-8')
        array = np.asarray(array, dtype='<f8')
        buffer.write(_U32.pack(len(encoded)))
        buffer.write(encoded)
        buffer.write(_U32.pack(array.ndim))
        for dim in array.shape:
            buffer.write(_U32.pack(dim))
        buffer.write(array.tobytes(order='C'))
    return buffer.getvalue()


def _read_exact(stream: BinaryIO, size: int, what: str) -> bytes:
    chunk = stream.read(size)
    if len(chunk) != size:
        raise CheckpointError(f'truncated checkpoint while reading {what}')
    return chunk


def decode_arrays(payload: bytes) -> Dict[str, np.ndarray]:
    stream = io.BytesIO(payload)
    magic = stream.read(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointError(f'not a checkpoint (magic {magic!r}, expected {MAGIC!r} format version {FORMAT_VERSION})')
    (version,) = _U32.unpack(_read_exact(stream, 4, 'format version'))
    if version != FORMAT_VERSION:
        raise CheckpointError(f'unsupported checkpoint format version {version} (expected {FORMAT_VERSION})')
    arrays: Dict[str, np.ndarray] = {}
    while True:
        head = stream.read(4)
        if not head:
            break
        if len(head) != 4:
            raise CheckpointError('truncated checkpoint while reading name length')
        (name_length,) = _U32.unpack(head)
        try:
            name = _read_exact(stream, name_length, 'array name').decode('utf-8')
        except UnicodeDecodeError as e:
            raise CheckpointError(f'corrupt array name: {e}') from e
        (rank,) = _U32.unpack(_read_exact(stream, 4, f'rank of {name}'))
        shape = tuple(_U32.unpack(_read_exact(stream, 4, f'shape of {name}'))[0] for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(_read_exact(stream, 8 * count, f'values of {name}'), dtype='<f8')
        if name in arrays:
            raise CheckpointError(f'duplicate array {name}')
        arrays[name] = values.reshape(shape).astype(np.float64)
    return arrays


def save_checkpoint(params: ModelParams, path: str) -> str:
    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    payload = encode_arrays({name: tensor.data for name, tensor in params.named_tensors().items()})
    with open(path, 'wb') as f:
        f.write(payload)
    logger.debug(f'Saved checkpoint {path} ({len(payload)} bytes)')
    return path


def load_checkpoint(path: str) -> ModelParams:
    try:
        with open(path, 'rb') as f:
            payload = f.read()
    except OSError as e:
        raise CheckpointError(f'cannot read checkpoint {path}: {e}') from e
    arrays = decode_arrays(payload)
    try:
        return ModelParams.from_named({name: Tensor(array, requires_grad=True) for name, array in arrays.items()})
    except InvalidArgumentError as e:
        raise CheckpointError(f'checkpoint {path} does not describe a model: {e}') from e
