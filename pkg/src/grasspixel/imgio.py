"""Debug image output: uncompressed float EXR and 8-bit PNG previews.

Files written here are for inspection only. Measurement never round-trips
through files; it stays on the in-process linear floats.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .colorimetry import srgb_oetf
from .lighting import LightingRig
from .renderer import LinearImage, expose_gray_card

__all__ = ["write_exr", "read_exr", "encode_preview_png", "write_preview_png"]

_EXR_MAGIC = 20000630
_PT_FLOAT = 2


def _attr(name: bytes, typ: bytes, data: bytes) -> bytes:
    return name + b"\x00" + typ + b"\x00" + struct.pack("<i", len(data)) + data


def write_exr(path, pixels: np.ndarray) -> None:
    """Write (H, W, 3) float32/64 linear RGB as an uncompressed scanline EXR."""
    px = np.asarray(pixels, dtype=np.float32)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError("pixels must be (H, W, 3)")
    h, w = px.shape[:2]

    chlist = b""
    for name in (b"B", b"G", b"R"):  # alphabetical, per the format
        chlist += name + b"\x00" + struct.pack("<iBBBBii", _PT_FLOAT, 0, 0, 0, 0, 1, 1)
    chlist += b"\x00"

    header = b""
    header += _attr(b"channels", b"chlist", chlist)
    header += _attr(b"compression", b"compression", b"\x00")  # none
    box = struct.pack("<4i", 0, 0, w - 1, h - 1)
    header += _attr(b"dataWindow", b"box2i", box)
    header += _attr(b"displayWindow", b"box2i", box)
    header += _attr(b"lineOrder", b"lineOrder", b"\x00")  # increasing y
    header += _attr(b"pixelAspectRatio", b"float", struct.pack("<f", 1.0))
    header += _attr(b"screenWindowCenter", b"v2f", struct.pack("<2f", 0.0, 0.0))
    header += _attr(b"screenWindowWidth", b"float", struct.pack("<f", 1.0))
    header += b"\x00"

    preamble = struct.pack("<ii", _EXR_MAGIC, 2) + header
    table_start = len(preamble)
    scanline_bytes = 8 + 3 * 4 * w  # y + size prefix, then B,G,R planes
    data_start = table_start + 8 * h
    offsets = struct.pack("<%dQ" % h, *(data_start + i * scanline_bytes for i in range(h)))

    with open(path, "wb") as f:
        f.write(preamble)
        f.write(offsets)
        for y in range(h):
            f.write(struct.pack("<ii", y, 3 * 4 * w))
            f.write(px[y, :, 2].tobytes())  # B
            f.write(px[y, :, 1].tobytes())  # G
            f.write(px[y, :, 0].tobytes())  # R


def read_exr(path) -> np.ndarray:
    """Read back an uncompressed float EXR written by :func:`write_exr`."""
    data = Path(path).read_bytes()
    magic, version = struct.unpack_from("<ii", data, 0)
    if magic != _EXR_MAGIC:
        raise ValueError(f"{path}: not an EXR file")
    pos = 8
    attrs = {}
    while data[pos] != 0:
        end = data.index(b"\x00", pos)
        name = data[pos:end]
        pos = end + 1
        end = data.index(b"\x00", pos)
        typ = data[pos:end]
        pos = end + 1
        (size,) = struct.unpack_from("<i", data, pos)
        pos += 4
        attrs[name] = (typ, data[pos : pos + size])
        pos += size
    pos += 1  # header terminator

    if attrs[b"compression"][1] != b"\x00":
        raise ValueError("only uncompressed EXR is supported")
    x0, y0, x1, y1 = struct.unpack("<4i", attrs[b"dataWindow"][1])
    w, h = x1 - x0 + 1, y1 - y0 + 1

    chl = attrs[b"channels"][1]
    names = []
    cpos = 0
    while chl[cpos] != 0:
        end = chl.index(b"\x00", cpos)
        names.append(chl[cpos:end])
        cpos = end + 1 + 16
    if names != [b"B", b"G", b"R"]:
        raise ValueError(f"unexpected channel layout {names}")

    pos += 8 * h  # skip the offset table
    out = np.empty((h, w, 3), dtype=np.float32)
    for _ in range(h):
        y, size = struct.unpack_from("<ii", data, pos)
        pos += 8
        plane = np.frombuffer(data, dtype="<f4", count=3 * w, offset=pos)
        pos += size
        out[y, :, 2] = plane[:w]
        out[y, :, 1] = plane[w : 2 * w]
        out[y, :, 0] = plane[2 * w :]
    return out.astype(np.float64)


def encode_preview_png(img: LinearImage, rig: LightingRig | None = None) -> bytes:
    """Tone-map a linear image for human viewing: gray-card exposure (if not
    already applied) then sRGB encoding. Never feed this back into measurement."""
    if rig is not None and img.exposure_scale == 1.0:
        img = expose_gray_card(img, rig)
    encoded = srgb_oetf(np.clip(img.pixels, 0.0, 1.0))
    data = (np.asarray(encoded) * 255.0).round().astype(np.uint8)
    im = Image.fromarray(data, mode="RGB")
    import io

    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def write_preview_png(path, img: LinearImage, rig: LightingRig | None = None) -> None:
    Path(path).write_bytes(encode_preview_png(img, rig))
