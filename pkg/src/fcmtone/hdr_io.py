"""Image codecs: Radiance RGBE (.hdr) and PFM readers, P6 PPM writer.

All decoders work on byte strings and are strict: any structural defect
raises :class:`FormatError` with a message naming the problem. Pixel data
is held in numpy arrays of shape (height, width, 3), top-to-bottom rows.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

_RADIANCE_MAGICS = (b"#?RADIANCE", b"#?RGBE")
_RADIANCE_FORMAT = b"32-bit_rle_rgbe"

# Shared-exponent decode:  component = mantissa * 2^(exponent - 136), zero if
# the exponent byte is zero.
_RGBE_EXP_BIAS = 136


@dataclass
class HdrImage:
    """Linear, scene-referred RGB raster. Components finite and >= 0."""

    width: int
    height: int
    data: np.ndarray  # (height, width, 3) float32

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"data shape {self.data.shape} != {(self.height, self.width, 3)}"
            )
        if not np.isfinite(self.data).all():
            raise ValueError("HDR data must be finite")
        if (self.data < 0).any():
            raise ValueError("HDR data must be non-negative")


@dataclass
class LdrImage:
    """Display-referred RGB raster, every component in [0, 1]."""

    width: int
    height: int
    data: np.ndarray  # (height, width, 3) float32

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"data shape {self.data.shape} != {(self.height, self.width, 3)}"
            )
        if not np.isfinite(self.data).all():
            raise ValueError("LDR data must be finite")
        if (self.data < 0).any() or (self.data > 1).any():
            raise ValueError("LDR data must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Radiance RGBE
# ---------------------------------------------------------------------------


def decode_rgbe(quads: np.ndarray) -> np.ndarray:
    """Decode (..., 4) uint8 RGBE quadruples to (..., 3) float32 radiance."""
    quads = np.asarray(quads, dtype=np.uint8)
    mant = quads[..., :3].astype(np.float32)
    expo = quads[..., 3].astype(np.int32)
    scale = np.ldexp(np.float32(1.0), expo - _RGBE_EXP_BIAS).astype(np.float32)
    out = mant * scale[..., None]
    out[expo == 0] = 0.0
    return out


def encode_rgbe(rgb: np.ndarray) -> np.ndarray:
    """Encode (..., 3) non-negative float radiance to (..., 4) uint8 RGBE.

    Mantissas are rounded to nearest (half away from zero), so the decode of
    the result is within 0.5 * 2^(e-136) of the input per channel. Values too
    small for the shared exponent encode as (0, 0, 0, 0); values beyond the
    format's range saturate at exponent 255.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    v = rgb.max(axis=-1)
    with np.errstate(divide="ignore"):
        _, e = np.frexp(v)  # v = f * 2^e, f in [0.5, 1)
    scale = np.ldexp(256.0, -e)
    # Rounding can push the max channel to 256; bump the exponent once.
    bump = np.floor(v * scale + 0.5) >= 256.0
    e = e + bump
    scale = np.where(bump, scale * 0.5, scale)
    mant = np.floor(rgb * scale[..., None] + 0.5)
    expo = e + (_RGBE_EXP_BIAS - 8)  # stored exponent = e + 128
    zero = (v <= 0.0) | (expo < 1)
    sat = expo > 255
    out = np.empty(rgb.shape[:-1] + (4,), dtype=np.uint8)
    out[..., :3] = np.clip(mant, 0, 255).astype(np.uint8)
    out[..., 3] = np.clip(expo, 1, 255).astype(np.uint8)
    out[..., :3][sat] = 255
    out[zero] = 0
    return out


class _ByteCursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def line(self) -> bytes:
        end = self.data.find(b"\n", self.pos)
        if end < 0:
            raise FormatError("malformed header: unterminated line")
        out = self.data[self.pos : end]
        self.pos = end + 1
        return out

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated scanline: unexpected end of data")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise FormatError("truncated scanline: unexpected end of data")
        b = self.data[self.pos]
        self.pos += 1
        return b


def _read_radiance_header(cur: _ByteCursor) -> tuple[int, int]:
    magic = cur.line()
    if not any(magic.startswith(m) for m in _RADIANCE_MAGICS):
        raise FormatError("malformed header: missing Radiance magic line")
    fmt = None
    while True:
        line = cur.line()
        if line == b"":
            break
        if line.startswith(b"#"):
            continue
        key, _, value = line.partition(b"=")
        key = key.strip()
        if key == b"FORMAT":
            fmt = value.strip()
        elif key in (b"EXPOSURE", b"GAMMA", b"PIXASPECT", b"COLORCORR"):
            # Parsed for well-formedness, then ignored: the pipeline
            # renormalizes by the image mean.
            try:
                [float(tok) for tok in value.split()]
            except ValueError:
                raise FormatError(f"malformed header: bad {key.decode()} value")
        elif b"=" not in line:
            raise FormatError("malformed header: junk before resolution line")
    if fmt is None:
        raise FormatError("malformed header: missing FORMAT line")
    if fmt != _RADIANCE_FORMAT:
        raise FormatError(f"malformed header: unsupported FORMAT {fmt.decode()!r}")
    res = cur.line()
    m = re.fullmatch(rb"\s*-Y\s+(\d+)\s+\+X\s+(\d+)\s*", res)
    if m is None:
        if re.fullmatch(rb"\s*[-+][XY]\s+\d+\s+[-+][XY]\s+\d+\s*", res):
            raise FormatError(
                f"unsupported orientation {res.decode(errors='replace')!r}"
                " (only '-Y H +X W')"
            )
        raise FormatError("malformed header: bad resolution line")
    height, width = int(m.group(1)), int(m.group(2))
    if height < 1 or width < 1:
        raise FormatError("malformed header: zero image dimension")
    return height, width


def _read_rle_component(cur: _ByteCursor, width: int, out: np.ndarray) -> None:
    filled = 0
    while filled < width:
        count = cur.byte()
        if count > 128:
            run = count - 128
            if filled + run > width:
                raise FormatError("truncated scanline: RLE run overflows row")
            out[filled : filled + run] = cur.byte()
            filled += run
        else:
            if count == 0:
                raise FormatError("truncated scanline: zero-length RLE literal")
            if filled + count > width:
                raise FormatError("truncated scanline: RLE literal overflows row")
            chunk = cur.take(count)
            out[filled : filled + count] = np.frombuffer(chunk, dtype=np.uint8)
            filled += count


def _read_scanline(cur: _ByteCursor, width: int) -> np.ndarray:
    quads = np.empty((width, 4), dtype=np.uint8)
    head = cur.take(4)
    # New-style RLE is only legal for widths in [8, 0x7fff]; outside that
    # range a leading (2, 2, ...) quadruple is ordinary pixel data.
    if 8 <= width <= 0x7FFF and head[0] == 2 and head[1] == 2 and head[2] & 0x80 == 0:
        if ((head[2] << 8) | head[3]) != width:
            raise FormatError("truncated scanline: RLE header width mismatch")
        for c in range(4):
            _read_rle_component(cur, width, quads[:, c])
        return quads
    # Old-style stream: flat quadruples with (1,1,1,n) repeat codes.
    quads[0] = np.frombuffer(head, dtype=np.uint8)
    if tuple(head[:3]) == (1, 1, 1):
        raise FormatError("truncated scanline: repeat code with no previous pixel")
    filled = 1
    shift = 0
    while filled < width:
        q = cur.take(4)
        if q[0] == 1 and q[1] == 1 and q[2] == 1:
            run = q[3] << shift
            if filled + run > width:
                raise FormatError("truncated scanline: repeat overflows row")
            quads[filled : filled + run] = quads[filled - 1]
            filled += run
            shift += 8
        else:
            quads[filled] = np.frombuffer(q, dtype=np.uint8)
            filled += 1
            shift = 0
    return quads


def read_radiance(data: bytes) -> HdrImage:
    """Decode a Radiance RGBE byte stream (both RLE styles)."""
    cur = _ByteCursor(data)
    height, width = _read_radiance_header(cur)
    rows = np.empty((height, width, 4), dtype=np.uint8)
    for y in range(height):
        rows[y] = _read_scanline(cur, width)
    return HdrImage(width, height, decode_rgbe(rows))


def _rle_encode_component(values: np.ndarray) -> bytes:
    # Runs of >= 4 identical bytes become run codes; everything else becomes
    # literal chunks of at most 128 bytes.
    out = bytearray()
    n = len(values)
    i = 0
    lit_start = 0
    while i < n:
        run = 1
        while i + run < n and run < 127 and values[i + run] == values[i]:
            run += 1
        if run >= 4:
            j = lit_start
            while j < i:
                k = min(128, i - j)
                out.append(k)
                out.extend(values[j : j + k].tobytes())
                j += k
            out.append(128 + run)
            out.append(int(values[i]))
            i += run
            lit_start = i
        else:
            i += run
    j = lit_start
    while j < n:
        k = min(128, n - j)
        out.append(k)
        out.extend(values[j : j + k].tobytes())
        j += k
    return bytes(out)


def write_radiance(image: HdrImage) -> bytes:
    """Encode to Radiance RGBE, new-style RLE scanlines where the format allows."""
    out = bytearray()
    out.extend(b"#?RADIANCE\n")
    out.extend(b"FORMAT=" + _RADIANCE_FORMAT + b"\n\n")
    out.extend(f"-Y {image.height} +X {image.width}\n".encode())
    quads = encode_rgbe(image.data)
    rle = 8 <= image.width <= 0x7FFF
    for y in range(image.height):
        row = quads[y]
        if rle:
            out.extend(bytes((2, 2, image.width >> 8, image.width & 0xFF)))
            for c in range(4):
                out.extend(_rle_encode_component(row[:, c]))
        else:
            out.extend(row.tobytes())
    return bytes(out)


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------


def _pfm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data) and data[pos : pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("malformed PFM header: missing token")
    return data[start:pos], pos


def read_pfm(data: bytes) -> HdrImage:
    """Decode a color PFM stream. Grayscale 'Pf' is rejected."""
    magic, pos = _pfm_token(data, 0)
    if magic == b"Pf":
        raise FormatError("grayscale 'Pf' PFM is not supported (color 'PF' only)")
    if magic != b"PF":
        raise FormatError("malformed PFM header: bad magic")
    try:
        wtok, pos = _pfm_token(data, pos)
        htok, pos = _pfm_token(data, pos)
        stok, pos = _pfm_token(data, pos)
        width, height = int(wtok), int(htok)
        scale = float(stok)
    except (ValueError, FormatError):
        raise FormatError("malformed PFM header: bad dimensions or scale")
    if width < 1 or height < 1:
        raise FormatError("malformed PFM header: zero image dimension")
    if scale == 0.0:
        raise FormatError("malformed PFM header: zero scale")
    pos += 1  # single whitespace byte terminates the header
    count = width * height * 3
    payload = data[pos : pos + count * 4]
    if len(payload) < count * 4:
        raise FormatError("truncated PFM payload")
    dt = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    vals = np.frombuffer(payload, dtype=dt).astype(np.float32)
    img = vals.reshape(height, width, 3)[::-1]  # stored bottom-to-top
    if not np.isfinite(img).all():
        raise FormatError("PFM payload contains NaN or infinity")
    if (img < 0).any():
        raise FormatError("PFM payload contains negative radiance")
    mag = abs(scale)
    if mag != 1.0:
        img = img * np.float32(mag)
    return HdrImage(width, height, np.ascontiguousarray(img))


def write_pfm(data: np.ndarray) -> bytes:
    """Encode an (H, W, 3) color or (H, W) grayscale float array as PFM.

    Values are written as little-endian float32 (scale -1.0), rows
    bottom-to-top. write_pfm -> read_pfm is bit-exact for color arrays of
    finite non-negative float32.
    """
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
        height, width = arr.shape[:2]
    elif arr.ndim == 2:
        magic = b"Pf"
        height, width = arr.shape
    else:
        raise FormatError(f"cannot encode array of shape {arr.shape} as PFM")
    head = magic + f"\n{width} {height}\n-1.0\n".encode()
    body = arr[::-1].astype("<f4").tobytes()
    return head + body


# ---------------------------------------------------------------------------
# PPM
# ---------------------------------------------------------------------------


def write_ppm(image: LdrImage, gamma: float = 1.0) -> bytes:
    """Encode as binary P6, maxval 255.

    Quantization is round(255 * clamp(v, 0, 1)^(1/gamma)) with round half
    away from zero. gamma = 1.0 is a pass-through.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    v = np.clip(image.data.astype(np.float64), 0.0, 1.0)
    if gamma != 1.0:
        v = v ** (1.0 / gamma)
    quant = np.floor(255.0 * v + 0.5).astype(np.uint8)
    head = f"P6\n{image.width} {image.height}\n255\n".encode()
    return head + quant.tobytes()
