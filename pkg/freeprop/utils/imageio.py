"""Binary PPM (P6) and PGM (P5) files, 8 bits per sample."""
import os
from typing import Tuple

import numpy as np


def quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def dequantize(samples: np.ndarray) -> np.ndarray:
    return samples.astype(np.float64) / 255.0


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high - low <= 0.0:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def upscale(values: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(values, factor, axis=0), factor, axis=1)


def _write(path: str, magic: bytes, samples: np.ndarray) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    height, width = samples.shape[:2]
    with open(path, 'wb') as f:
        f.write(magic + f'\n{width} {height}\n255\n'.encode('ascii'))
        f.write(np.ascontiguousarray(samples).tobytes())


def write_ppm(path: str, image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f'PPM needs an (H, W, 3) image, got {image.shape}')
    _write(path, b'P6', quantize(image))


def write_pgm(path: str, image: np.ndarray) -> None:
    if image.ndim != 2:
        raise ValueError(f'PGM needs an (H, W) image, got {image.shape}')
    _write(path, b'P5', quantize(image))


def _parse_header(payload: bytes) -> Tuple[bytes, int, int, int, int]:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(payload) and payload[pos:pos + 1].isspace():
            pos += 1
        if payload[pos:pos + 1] == b'#':
            while pos < len(payload) and payload[pos:pos + 1] != b'\n':
                pos += 1
            continue
        start = pos
        while pos < len(payload) and not payload[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError('truncated header')
        tokens.append(payload[start:pos])
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    return magic, width, height, maxval, pos + 1


def _read(path: str, magic: bytes, channels: int) -> np.ndarray:
    with open(path, 'rb') as f:
        payload = f.read()
    found, width, height, maxval, offset = _parse_header(payload)
    if found != magic:
        raise ValueError(f'expected {magic.decode()} file, found {found!r}')
    if maxval != 255:
        raise ValueError(f'unsupported maxval {maxval}')
    expected = width * height * channels
    body = payload[offset:offset + expected]
    if len(body) != expected:
        raise ValueError(f'truncated pixel data: {len(body)} of {expected} bytes')
    samples = np.frombuffer(body, dtype=np.uint8)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return dequantize(samples.reshape(shape))


def read_ppm(path: str) -> np.ndarray:
    return _read(path, b'P6', 3)


def read_pgm(path: str) -> np.ndarray:
    return _read(path, b'P5', 1)
