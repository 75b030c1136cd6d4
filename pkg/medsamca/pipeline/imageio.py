# purpose: grayscale image and mask files
# binary PGM (P5, maxval 255) for images and {0,255} masks; raw tensor files
# (.tnsr) for images and volumes that must keep full precision

import io
import os

import numpy as np
from PIL import Image
from PIL import UnidentifiedImageError

from medsamca.autodiff.tensorio import load_tensor
from medsamca.autodiff.tensorio import save_tensor
from medsamca.errors import FormatError

PGM_MAGIC = b"P5"
PGM_MAXVAL = 255
WHITESPACE = b" \t\n\r\x0b\x0c"


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise FormatError("PGM needs a 2-D array, got {0}".format(pixels.shape))
    if pixels.dtype != np.uint8:
        if pixels.min() < 0 or pixels.max() > 255:
            raise FormatError("PGM values must lie in [0, 255]")
        pixels = pixels.astype(np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels)).save(buffer, format="PPM")
    return buffer.getvalue()


def _headerTokens(blob: bytes, count: int):
    "Next count header fields after the magic, skipping whitespace and comments"
    pos = len(PGM_MAGIC)
    tokens = []
    while len(tokens) < count:
        if pos >= len(blob):
            raise FormatError("truncated PGM header", pos)
        ch = blob[pos:pos + 1]
        if ch in WHITESPACE:
            pos += 1
        elif ch == b"#":
            end = blob.find(b"\n", pos)
            if end < 0:
                raise FormatError("unterminated PGM comment", pos)
            pos = end + 1
        else:
            start = pos
            while pos < len(blob) and blob[pos:pos + 1] not in WHITESPACE:
                pos += 1
            field = blob[start:pos]
            if not field.isdigit():
                raise FormatError("bad PGM header field {0!r}".format(field), start)
            tokens.append((int(field), start))
    if pos >= len(blob) or blob[pos:pos + 1] not in WHITESPACE:
        raise FormatError("missing whitespace after PGM maxval", pos)
    return tokens, pos + 1


def decode_pgm(blob: bytes) -> np.ndarray:
    """Parse a binary 8-bit PGM into a uint8 [H, W] array. The header and
    payload length are checked here so errors carry a byte offset; Pillow
    decodes the pixels."""
    if blob[:2] != PGM_MAGIC:
        raise FormatError("not a binary PGM (magic {0!r})".format(blob[:2]), 0)
    tokens, offset = _headerTokens(blob, 3)
    (width, wOffset), (height, _), (maxval, mOffset) = tokens
    if width < 1 or height < 1:
        raise FormatError("PGM size {0}x{1} is empty".format(width, height), wOffset)
    if maxval != PGM_MAXVAL:
        raise FormatError("unsupported PGM maxval {0}".format(maxval), mOffset)
    expected = offset + width * height
    if len(blob) < expected:
        raise FormatError(
            "truncated PGM payload: expected {0} bytes, got {1}".format(
                expected, len(blob)), len(blob))
    if len(blob) > expected:
        raise FormatError("trailing bytes after PGM payload", expected)
    try:
        with Image.open(io.BytesIO(blob)) as image:
            image.load()
            mode, size = image.mode, image.size
            pixels = np.array(image, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as error:
        raise FormatError("unreadable PGM: {0}".format(error), 0)
    if mode != "L" or size != (width, height):
        raise FormatError("PGM decoded as {0} {1}x{2}".format(mode, *size), 0)
    return pixels


def decode_mask(blob: bytes) -> np.ndarray:
    "PGM mask with values {0, 255} -> uint8 {0, 1}"
    pixels = decode_pgm(blob)
    bad = np.flatnonzero((pixels != 0) & (pixels != 255))
    if bad.size:
        offset = len(blob) - pixels.size + int(bad[0])
        raise FormatError(
            "mask value {0} is not 0 or 255".format(pixels.flat[bad[0]]), offset)
    return (pixels == 255).astype(np.uint8)


def encode_mask(mask: np.ndarray) -> bytes:
    return encode_pgm(np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8))


def quantize(image01: np.ndarray) -> np.ndarray:
    "[0, 1] floats to uint8 by rounding"
    return np.clip(np.rint(np.asarray(image01, dtype=np.float64) * 255.0),
                   0, 255).astype(np.uint8)


def save_image(path, image01: np.ndarray):
    "Write a [0,1] grayscale image as PGM, or losslessly when path ends in .tnsr"
    if os.fspath(path).endswith(".tnsr"):
        save_tensor(path, np.asarray(image01, dtype=np.float64))
        return
    with open(path, "wb") as handle:
        handle.write(encode_pgm(quantize(image01)))


def load_image(path) -> np.ndarray:
    "[H, W] float64 in [0, 1]"
    if os.fspath(path).endswith(".tnsr"):
        return load_tensor(path).astype(np.float64)
    with open(path, "rb") as handle:
        return decode_pgm(handle.read()).astype(np.float64) / 255.0


def save_mask(path, mask: np.ndarray):
    with open(path, "wb") as handle:
        handle.write(encode_mask(mask))


def load_mask(path) -> np.ndarray:
    with open(path, "rb") as handle:
        return decode_mask(handle.read())
