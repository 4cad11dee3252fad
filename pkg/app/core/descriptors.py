"""Binary descriptor helpers and the Hamming kernel shared by every module.

Descriptors are stored packed, one ``uint8`` row of ``DESCRIPTOR_BYTES``
bytes per feature, bit 0 being the most significant bit of byte 0
(``numpy.packbits`` order).
"""
import numpy as np
from numpy.typing import NDArray

from app.core.config import DESCRIPTOR_BITS, DESCRIPTOR_BYTES
from app.core.errors import DescriptorWidthError

BinaryDescriptor = NDArray[np.uint8]
DescriptorMatrix = NDArray[np.uint8]

_BLOCK_ROWS = 256


def empty_descriptors(n_bytes: int = DESCRIPTOR_BYTES) -> DescriptorMatrix:
    return np.zeros((0, n_bytes), dtype=np.uint8)


def as_descriptor(value, bits: int = DESCRIPTOR_BITS) -> BinaryDescriptor:
    arr = np.asarray(value, dtype=np.uint8).reshape(-1)
    if arr.size * 8 != bits:
        raise DescriptorWidthError(arr.size * 8, bits)
    return arr


def as_descriptor_matrix(values, bits: int = DESCRIPTOR_BITS) -> DescriptorMatrix:
    """Validate and freeze a descriptor matrix of shape (n, bits / 8)."""
    n_bytes = bits // 8
    if values is None:
        return _frozen(empty_descriptors(n_bytes))
    arr = np.asarray(values, dtype=np.uint8)
    if arr.size == 0:
        return _frozen(empty_descriptors(n_bytes))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != n_bytes:
        raise DescriptorWidthError(arr.shape[-1] * 8, bits)
    return _frozen(np.ascontiguousarray(arr))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy() if arr.flags.writeable else arr
    arr.setflags(write=False)
    return arr


def hamming(a: BinaryDescriptor, b: BinaryDescriptor) -> int:
    return int(np.bitwise_count(np.bitwise_xor(a, b)).sum())


def hamming_to_many(d: BinaryDescriptor, many: DescriptorMatrix) -> NDArray[np.int64]:
    if len(many) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.bitwise_count(np.bitwise_xor(many, d)).sum(axis=1, dtype=np.int64)


def hamming_matrix(a: DescriptorMatrix, b: DescriptorMatrix) -> NDArray[np.int64]:
    out = np.zeros((len(a), len(b)), dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        return out
    for start in range(0, len(a), _BLOCK_ROWS):
        block = a[start:start + _BLOCK_ROWS]
        xor = np.bitwise_xor(block[:, None, :], b[None, :, :])
        out[start:start + len(block)] = np.bitwise_count(xor).sum(axis=2, dtype=np.int64)
    return out


def similarity(distance, bits: int = DESCRIPTOR_BITS):
    return 1.0 - np.asarray(distance, dtype=np.float64) / bits


def majority(descriptors: DescriptorMatrix) -> BinaryDescriptor:
    """Bitwise majority vote, ties broken toward 1."""
    bits = np.unpackbits(descriptors, axis=1)
    ones = bits.sum(axis=0, dtype=np.int64)
    return np.packbits((2 * ones >= len(descriptors)).astype(np.uint8))


def to_hex(d: BinaryDescriptor) -> str:
    return bytes(d).hex()


def from_hex(text: str, bits: int = DESCRIPTOR_BITS) -> BinaryDescriptor:
    raw = bytes.fromhex(text)
    if len(raw) * 8 != bits:
        raise DescriptorWidthError(len(raw) * 8, bits)
    return np.frombuffer(raw, dtype=np.uint8).copy()


def random_descriptors(rng: np.random.Generator, n: int, bits: int = DESCRIPTOR_BITS) -> DescriptorMatrix:
    return rng.integers(0, 256, size=(n, bits // 8), dtype=np.uint8)


def flip_bits(d: BinaryDescriptor, positions) -> BinaryDescriptor:
    bits = np.unpackbits(np.asarray(d, dtype=np.uint8))
    bits[np.asarray(positions, dtype=np.int64)] ^= 1
    return np.packbits(bits)


def perturb(d: BinaryDescriptor, rng: np.random.Generator, n_bits: int) -> BinaryDescriptor:
    """Flip ``n_bits`` distinct random bits of ``d``."""
    if n_bits <= 0:
        return np.array(d, dtype=np.uint8, copy=True)
    positions = rng.choice(len(d) * 8, size=n_bits, replace=False)
    return flip_bits(d, positions)
