"""Image file formats: Radiance RGBE (.hdr), PFM, and PNG via Pillow.

PFM is the lossless interchange format for HDR renders and test fixtures;
.hdr is supported for environment probes.  All readers return float
(H, W, 3) arrays in linear radiance, top row first.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    pass


# ---------------------------------------------------------------- PFM

def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", data)
    if not m:
        raise ImageFormatError(f"{path}: not a PFM file")
    color = m.group(1) == b"PF"
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    if w <= 0 or h <= 0:
        raise ImageFormatError(f"{path}: non-positive resolution {w}x{h}")
    nchan = 3 if color else 1
    count = w * h * nchan
    raw = data[m.end():]
    if len(raw) < count * 4:
        raise ImageFormatError(f"{path}: truncated PFM payload")
    dt = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(raw[: count * 4], dtype=dt).reshape(h, w, nchan)
    img = img[::-1].astype(np.float64)  # PFM rows are bottom-to-top
    if not color:
        img = np.repeat(img, 3, axis=2)
    return np.ascontiguousarray(img)


def write_pfm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError("write_pfm expects (H, W, 3)")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(img[::-1].astype("<f4").tobytes())


# ---------------------------------------------------------------- Radiance RGBE

def _decode_rgbe(rgbe: np.ndarray) -> np.ndarray:
    rgbe = rgbe.astype(np.float64)
    exp = rgbe[..., 3]
    scale = np.where(exp == 0, 0.0, np.exp2(exp - 136.0))
    return rgbe[..., :3] * scale[..., None]


def _encode_rgbe(rgb: np.ndarray) -> np.ndarray:
    rgb = np.maximum(np.asarray(rgb, dtype=np.float64), 0.0)
    maxc = rgb.max(axis=-1)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    pos = maxc > 1e-32
    _, e = np.frexp(maxc[pos])
    coef = np.exp2(-e + 8)
    mant = np.clip(rgb[pos] * coef[..., None] + 0.5, 0, 255).astype(np.uint8)
    out[pos, :3] = mant
    out[pos, 3] = (e + 128).astype(np.uint8)
    return out


def read_hdr(path) -> np.ndarray:
    """Read a Radiance RGBE image (flat or new-style RLE scanlines)."""
    data = Path(path).read_bytes()
    if not (data.startswith(b"#?RADIANCE") or data.startswith(b"#?RGBE")):
        raise ImageFormatError(f"{path}: missing Radiance signature")
    # header: lines up to the first blank line, then the resolution line
    pos = 0
    fmt_ok = False
    while True:
        eol = data.find(b"\n", pos)
        if eol < 0:
            raise ImageFormatError(f"{path}: unterminated header")
        line = data[pos:eol]
        pos = eol + 1
        if line.startswith(b"FORMAT="):
            fmt_ok = line.strip() == b"FORMAT=32-bit_rle_rgbe"
        if line == b"":
            break
    if not fmt_ok:
        raise ImageFormatError(f"{path}: unsupported FORMAT (want 32-bit_rle_rgbe)")
    eol = data.find(b"\n", pos)
    m = re.match(rb"-Y (\d+) \+X (\d+)", data[pos:eol])
    if not m:
        raise ImageFormatError(f"{path}: unsupported resolution line {data[pos:eol]!r}")
    h, w = int(m.group(1)), int(m.group(2))
    if h <= 0 or w <= 0:
        raise ImageFormatError(f"{path}: non-positive resolution")
    buf = np.frombuffer(data, dtype=np.uint8, offset=eol + 1)
    rows = []
    off = 0
    for _ in range(h):
        if off + 4 > len(buf):
            raise ImageFormatError(f"{path}: truncated scanline data")
        head = buf[off:off + 4]
        if head[0] == 2 and head[1] == 2 and (int(head[2]) << 8 | int(head[3])) == w and w >= 8:
            off += 4
            row = np.empty((4, w), dtype=np.uint8)
            for c in range(4):
                x = 0
                while x < w:
                    if off >= len(buf):
                        raise ImageFormatError(f"{path}: truncated RLE stream")
                    n = int(buf[off]); off += 1
                    if n > 128:  # run
                        row[c, x:x + n - 128] = buf[off]; off += 1; x += n - 128
                    else:  # literals
                        row[c, x:x + n] = buf[off:off + n]; off += n; x += n
                if x != w:
                    raise ImageFormatError(f"{path}: RLE scanline overrun")
            rows.append(row.T.copy())
        else:
            if off + 4 * w > len(buf):
                raise ImageFormatError(f"{path}: truncated flat scanline")
            rows.append(buf[off:off + 4 * w].reshape(w, 4).copy())
            off += 4 * w
    return _decode_rgbe(np.stack(rows, axis=0))


def write_hdr(path, img: np.ndarray) -> None:
    """Write a Radiance RGBE image using flat (uncompressed) scanlines."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError("write_hdr expects (H, W, 3)")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
        f.write(f"-Y {h} +X {w}\n".encode("ascii"))
        f.write(_encode_rgbe(img).tobytes())


# ---------------------------------------------------------------- PNG

def srgb_encode(linear01: np.ndarray) -> np.ndarray:
    x = np.clip(linear01, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def to_u8(img01: np.ndarray) -> np.ndarray:
    return (np.clip(img01, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(path, u8: np.ndarray) -> None:
    u8 = np.asarray(u8)
    if u8.dtype != np.uint8 or u8.ndim != 3 or u8.shape[2] != 3:
        raise ImageFormatError("write_png expects uint8 (H, W, 3)")
    Image.fromarray(u8, mode="RGB").save(path, format="PNG")


def encode_png_bytes(u8: np.ndarray) -> bytes:
    import io

    u8 = np.asarray(u8)
    bio = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(bio, format="PNG")
    return bio.getvalue()
