"""File formats: binary PPM/PGM images and the LRFW weight container.

The weight container is deliberately simple: magic ``LRFW``, a version
word, an entry count, then per entry the name, dtype code, rank, extents
and raw little-endian values.  Entries appear in parameter-store order,
so serialization is canonical: the same store always produces identical
bytes.  Loading validates every structural invariant before returning and
names the offending entry on failure.

Images are binary PPM (P6, maxval 255) and label masks binary PGM (P5),
chosen to avoid any codec dependency.
"""

import struct

import numpy as np

from .errors import DataError, FormatError
from .model import ParamStore
from .tensor import Tensor

MAGIC = b"LRFW"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

def save_weights(store: ParamStore, path):
    """Write the store in LRFW format (entry order = store order)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(store)))
        for name, param in store.items():
            encoded = name.encode("utf-8")
            code = _DTYPE_CODES.get(param.data.dtype)
            if code is None:
                raise FormatError(f"cannot serialize dtype {param.data.dtype} of {name!r}")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<II", code, param.ndim))
            fh.write(struct.pack(f"<{param.ndim}I", *param.shape))
            fh.write(np.ascontiguousarray(param.data, dtype=_DTYPES[code]).tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError(f"truncated file: wanted {count} bytes for {what} "
                              f"at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_weights(path) -> ParamStore:
    """Read an LRFW file back into a ParamStore (bit-identical round trip)."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("bad magic: not an LRFW weight file")
    version = reader.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported weight format version {version}")
    count = reader.u32("entry count")
    store = ParamStore()
    for i in range(count):
        name_len = reader.u32(f"name length of entry {i}")
        name = reader.take(name_len, f"name of entry {i}").decode("utf-8")
        code = reader.u32(f"dtype of {name!r}")
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code} in entry {name!r}")
        rank = reader.u32(f"rank of {name!r}")
        shape = struct.unpack(f"<{rank}I", reader.take(4 * rank, f"extents of {name!r}"))
        numel = 1
        for extent in shape:
            numel *= extent
        raw = reader.take(numel * _DTYPES[code].itemsize, f"values of {name!r}")
        values = np.frombuffer(raw, dtype=_DTYPES[code]).reshape(shape)
        if name in store:
            raise FormatError(f"duplicate entry name {name!r}")
        store.add(name, Tensor(values.copy(), requires_grad=True))
    if reader.pos != len(reader.data):
        raise FormatError(f"{len(reader.data) - reader.pos} trailing bytes "
                          f"after the last entry")
    return store


def weight_file_size(store: ParamStore) -> int:
    """Exact on-disk size: fixed header plus per-entry name and payload."""
    total = 4 + 8
    for name, param in store.items():
        total += 4 + len(name.encode("utf-8")) + 8 + 4 * param.ndim
        total += param.data.dtype.itemsize * param.size
    return total


# ---------------------------------------------------------------------------
# PPM / PGM
# ---------------------------------------------------------------------------

def _parse_pnm_header(data: bytes, magic: bytes, path) -> tuple:
    if data[:2] != magic:
        raise FormatError(f"{path}: bad magic at byte 0, expected {magic.decode()}")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header at byte {pos}")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise FormatError(f"{path}: unexpected byte {ch!r} in header at byte {pos}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after maxval at byte {pos}")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: maxval must be 255, got {maxval} (header ends at byte {pos})")
    return width, height, pos


def read_image(path) -> np.ndarray:
    """Binary PPM -> float32 (3, H, W) scaled to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, pos = _parse_pnm_header(data, b"P6", path)
    need = width * height * 3
    payload = data[pos:pos + need]
    if len(payload) != need:
        raise FormatError(f"{path}: truncated pixel data at byte {pos + len(payload)}, "
                          f"wanted {need} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return (pixels.astype(np.float32) / 255.0).transpose(2, 0, 1)


def write_image(path, image: np.ndarray):
    """Float (3, H, W) in [0, 1] -> binary PPM."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"image must be (3, H, W), got {image.shape}")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    _, h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.transpose(1, 2, 0).tobytes())


def read_mask(path, num_classes: int = None) -> np.ndarray:
    """Binary PGM -> int64 label map; optionally range-checked."""
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, pos = _parse_pnm_header(data, b"P5", path)
    need = width * height
    payload = data[pos:pos + need]
    if len(payload) != need:
        raise FormatError(f"{path}: truncated mask data at byte {pos + len(payload)}, "
                          f"wanted {need} bytes")
    mask = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).astype(np.int64)
    if num_classes is not None and mask.max() >= num_classes:
        raise DataError(f"{path}: label {mask.max()} out of range for {num_classes} classes")
    return mask


def write_mask(path, mask: np.ndarray):
    """Integer (H, W) labels < 256 -> binary PGM."""
    if mask.ndim != 2:
        raise DataError(f"mask must be (H, W), got {mask.shape}")
    if mask.min() < 0 or mask.max() > 255:
        raise DataError("mask labels must fit in a byte")
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(mask.astype(np.uint8).tobytes())
