"""Binary Netpbm (P5 gray / P6 RGB, maxval 255) codec."""

import numpy as np

from .errors import (
    TruncatedDataError,
    UnsupportedDepthError,
    UnsupportedFormatError,
)

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _header_tokens(blob, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens = []
    n = len(blob)
    while len(tokens) < count:
        while pos < n and blob[pos] in _WHITESPACE:
            pos += 1
        if pos < n and blob[pos:pos + 1] == b"#":
            while pos < n and blob[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and blob[pos] not in _WHITESPACE and blob[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedDataError("Netpbm header ended before width/height/maxval")
        tokens.append(blob[start:pos])
    if pos >= n or blob[pos] not in _WHITESPACE:
        raise TruncatedDataError("Netpbm header is not terminated by whitespace")
    return tokens, pos + 1


def decode_netpbm(blob):
    """Decode P5/P6 bytes to a uint8 array of shape (H, W) or (H, W, 3)."""
    blob = bytes(blob)
    magic = blob[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise UnsupportedFormatError(
            f"unsupported Netpbm magic {magic!r}; only binary P5/P6 are read"
        )
    tokens, offset = _header_tokens(blob, 3, 2)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise UnsupportedFormatError(f"non-numeric Netpbm header field: {exc}") from exc
    if width < 1 or height < 1:
        raise UnsupportedFormatError(f"invalid image size {width}x{height}")
    if maxval != 255:
        raise UnsupportedDepthError(f"maxval {maxval} not supported (need 255)")
    need = width * height * channels
    data = blob[offset:offset + need]
    if len(data) < need:
        raise TruncatedDataError(
            f"pixel data has {len(data)} bytes, header declares {need}"
        )
    arr = np.frombuffer(data, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return arr.reshape(shape).copy()


def encode_netpbm(img):
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise UnsupportedDepthError(f"expected uint8 pixels, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 3 and img.shape[2] == 1:
        magic, img = b"P5", img[:, :, 0]
    else:
        raise UnsupportedFormatError(f"cannot encode image of shape {img.shape}")
    h, w = img.shape[:2]
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(img).tobytes()


def read_netpbm(path):
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read())


def write_netpbm(path, img):
    with open(path, "wb") as fh:
        fh.write(encode_netpbm(img))
