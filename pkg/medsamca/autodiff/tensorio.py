# purpose: raw tensor file format
#   magic "TNSR", u8 version=1, u8 dtype (0=f32, 1=f64), u8 ndim, u8 pad,
#   ndim little-endian u32 dims, row-major little-endian payload

import struct

import numpy as np

from medsamca.errors import FormatError

MAGIC = b"TNSR"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
HEADER = struct.Struct("<4sBBBx")


def encode_tensor(array: np.ndarray) -> bytes:
    "Serialize a float32/float64 array"
    array = np.asarray(array)
    if array.dtype == np.float32:
        code = 0
    elif array.dtype == np.float64:
        code = 1
    else:
        raise FormatError("unsupported dtype {0}".format(array.dtype))
    if array.ndim > 255:
        raise FormatError("too many dimensions: {0}".format(array.ndim))
    head = HEADER.pack(MAGIC, VERSION, code, array.ndim)
    dims = struct.pack("<{0}I".format(array.ndim), *array.shape)
    payload = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes()
    return head + dims + payload


def decode_tensor(blob: bytes) -> np.ndarray:
    "Parse bytes written by encode_tensor"
    if len(blob) < HEADER.size:
        raise FormatError("truncated tensor header", len(blob))
    magic, version, code, ndim = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError("bad magic {0!r}".format(magic), 0)
    if version != VERSION:
        raise FormatError("unsupported tensor version {0}".format(version), 4)
    if code not in DTYPE_CODES:
        raise FormatError("unknown dtype code {0}".format(code), 5)
    offset = HEADER.size
    dimBytes = 4 * ndim
    if len(blob) < offset + dimBytes:
        raise FormatError("truncated dimension list", len(blob))
    shape = struct.unpack_from("<{0}I".format(ndim), blob, offset)
    offset += dimBytes
    dtype = DTYPE_CODES[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    expected = offset + count * dtype.itemsize
    if len(blob) < expected:
        raise FormatError(
            "truncated payload: expected {0} bytes, got {1}".format(
                expected, len(blob)), len(blob))
    if len(blob) > expected:
        raise FormatError("trailing bytes after payload", expected)
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).astype(dtype.newbyteorder("="))


def save_tensor(path, array: np.ndarray):
    with open(path, "wb") as handle:
        handle.write(encode_tensor(array))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as handle:
        return decode_tensor(handle.read())
