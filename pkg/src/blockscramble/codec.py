"""Baseline-JPEG adapter: encode/decode with explicit quality and chroma
subsampling, plus a small marker parser that reads sampling factors and
quantization tables straight from the stream.

Actual DCT/entropy work is delegated to Pillow's libjpeg, which implements
the IJG quality convention; quality estimation inverts that convention by
matching the stream's quantization tables against the scaled Annex-K base
tables. PNG is supported as the lossless carrier for bit-exact round trips.
"""

from __future__ import annotations

import dataclasses
import enum
import io
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .core import CodecError, RasterImage

QUALITY_MIN = 1
QUALITY_MAX = 100


class Subsampling(enum.Enum):
    S444 = "4:4:4"
    S420 = "4:2:0"


# Pillow's JPEG encoder subsampling indices.
_PIL_SUBSAMPLING = {Subsampling.S444: 0, Subsampling.S420: 2}

# Annex-K base quantization tables, natural (row-major) order.
IJG_LUMINANCE_BASE = (
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
)
IJG_CHROMINANCE_BASE = (
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
)

# DQT segments store coefficients in zigzag scan order; _ZIGZAG[k] is the
# natural (row-major) position of the k-th zigzag entry.
_ZIGZAG = (
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
)


def ijg_quant_tables(quality: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(luminance, chrominance) tables for an IJG quality factor, baseline-clamped."""
    _check_quality(quality)
    scale = 5000 // quality if quality < 50 else 200 - quality * 2

    def scaled(base):
        return tuple(min(255, max(1, (b * scale + 50) // 100)) for b in base)

    return scaled(IJG_LUMINANCE_BASE), scaled(IJG_CHROMINANCE_BASE)


def _check_quality(quality: int) -> int:
    if not isinstance(quality, int) or not QUALITY_MIN <= quality <= QUALITY_MAX:
        raise CodecError(
            f"quality factor must be an integer in [{QUALITY_MIN}, {QUALITY_MAX}], "
            f"got {quality!r}"
        )
    return quality


@dataclass(frozen=True)
class JpegParams:
    """Encoder knobs: IJG quality factor plus chroma subsampling mode."""

    quality: int
    subsampling: Subsampling = Subsampling.S444

    def __post_init__(self):
        _check_quality(self.quality)


@dataclass(frozen=True)
class JpegStreamInfo:
    """Frame-header facts read directly from the byte stream."""

    width: int
    height: int
    component_count: int
    sampling_factors: tuple[tuple[int, int], ...]
    quant_tables: dict[int, tuple[int, ...]] = field(repr=False)
    component_qtables: tuple[int, ...] = ()
    comments: tuple[bytes, ...] = ()
    estimated_quality: int | None = None

    @property
    def subsampling(self) -> Subsampling | None:
        """Classify 3-component streams; None for grayscale or exotic layouts."""
        if self.component_count != 3:
            return None
        if self.sampling_factors == ((1, 1), (1, 1), (1, 1)):
            return Subsampling.S444
        if self.sampling_factors == ((2, 2), (1, 1), (1, 1)):
            return Subsampling.S420
        return None

    @property
    def grayscale(self) -> bool:
        return self.component_count == 1


def _u16(data: bytes, pos: int) -> int:
    return (data[pos] << 8) | data[pos + 1]


def parse_jpeg_info(data: bytes) -> JpegStreamInfo:
    """Scan markers up to SOS: dimensions, sampling factors, DQT tables, COM."""
    if len(data) < 4 or data[0] != 0xFF or data[1] != 0xD8:
        raise CodecError("not a JPEG stream (missing SOI marker)")
    pos = 2
    quant: dict[int, tuple[int, ...]] = {}
    comments: list[bytes] = []
    frame = None
    while pos + 4 <= len(data):
        if data[pos] != 0xFF:
            raise CodecError(f"corrupt marker stream at offset {pos}")
        while data[pos + 1] == 0xFF and pos + 2 < len(data):  # fill bytes
            pos += 1
        marker = data[pos + 1]
        if marker == 0xD9:  # EOI before SOS
            break
        length = _u16(data, pos + 2)
        seg = data[pos + 4:pos + 2 + length]
        if len(seg) != length - 2:
            raise CodecError("truncated JPEG segment")
        if marker == 0xDB:  # DQT: one or more tables per segment
            off = 0
            while off < len(seg):
                precision, table_id = seg[off] >> 4, seg[off] & 0x0F
                off += 1
                count = 64 * (2 if precision else 1)
                if off + count > len(seg):
                    raise CodecError("truncated quantization table")
                if precision:
                    vals = [_u16(seg, off + 2 * i) for i in range(64)]
                else:
                    vals = list(seg[off:off + 64])
                off += count
                natural = [0] * 64
                for k in range(64):
                    natural[_ZIGZAG[k]] = vals[k]
                quant[table_id] = tuple(natural)
        elif marker in (0xC0, 0xC1):  # SOF0/SOF1: baseline frame header
            ncomp = seg[5]
            comps = []
            qmap = []
            for i in range(ncomp):
                base = 6 + 3 * i
                comps.append((seg[base + 1] >> 4, seg[base + 1] & 0x0F))
                qmap.append(seg[base + 2])
            frame = {
                "height": _u16(seg, 1),
                "width": _u16(seg, 3),
                "ncomp": ncomp,
                "sampling": tuple(comps),
                "qmap": tuple(qmap),
            }
        elif marker in (0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF):
            raise CodecError(f"unsupported JPEG frame type SOF{marker - 0xC0}")
        elif marker == 0xFE:
            comments.append(bytes(seg))
        elif marker == 0xDA:  # SOS: header region ends
            pos += 2 + length
            break
        pos += 2 + length
    if frame is None:
        raise CodecError("no frame header (SOF) found")
    info = JpegStreamInfo(
        width=frame["width"],
        height=frame["height"],
        component_count=frame["ncomp"],
        sampling_factors=frame["sampling"],
        quant_tables=quant,
        component_qtables=frame["qmap"],
        comments=tuple(comments),
    )
    return dataclasses.replace(info, estimated_quality=estimate_quality(info))


def estimate_quality(source: JpegStreamInfo | bytes) -> int | None:
    """IJG quality factor whose standard tables exactly match the stream's.

    Component 0's table is matched against the luminance table, every other
    component's against chrominance. Ties break to the lowest quality;
    returns None for non-IJG tables.
    """
    info = parse_jpeg_info(source) if isinstance(source, (bytes, bytearray)) else source
    if not info.quant_tables or not info.component_qtables:
        return None
    try:
        lum = info.quant_tables[info.component_qtables[0]]
        chroma = [info.quant_tables[t] for t in info.component_qtables[1:]]
    except KeyError:
        return None
    for q in range(QUALITY_MIN, QUALITY_MAX + 1):
        want_lum, want_chroma = ijg_quant_tables(q)
        if lum == want_lum and all(c == want_chroma for c in chroma):
            return q
    return None


def encode_jpeg(image: RasterImage, params: JpegParams) -> bytes:
    """Baseline JFIF stream; grayscale input yields a single-component stream."""
    if image.channels == 1:
        pil = Image.fromarray(image.pixels[:, :, 0], "L")
        kwargs = {}
    elif image.channels == 3:
        pil = Image.fromarray(image.pixels, "RGB")
        kwargs = {"subsampling": _PIL_SUBSAMPLING[params.subsampling]}
    else:
        raise CodecError(f"cannot JPEG-encode {image.channels} channels")
    buf = io.BytesIO()
    pil.save(buf, "JPEG", quality=params.quality, **kwargs)
    return buf.getvalue()


def decode_jpeg(data: bytes) -> tuple[RasterImage, JpegStreamInfo]:
    """Decode a baseline JPEG; returns the raster plus parsed stream facts."""
    info = parse_jpeg_info(data)
    try:
        pil = Image.open(io.BytesIO(data))
        pil.load()
    except Exception as exc:
        raise CodecError(f"JPEG decode failed: {exc}") from exc
    if pil.mode == "L":
        arr = np.asarray(pil)[:, :, np.newaxis]
    elif pil.mode == "RGB":
        arr = np.asarray(pil)
    else:
        raise CodecError(f"unsupported JPEG color mode {pil.mode}")
    image = RasterImage(arr)
    if (image.width, image.height) != (info.width, info.height):
        raise CodecError("frame header dimensions disagree with decoded raster")
    return image, info


def insert_comment(data: bytes, comment: bytes) -> bytes:
    """Splice a COM segment right after SOI; the stream stays baseline-valid."""
    if len(data) < 2 or data[0] != 0xFF or data[1] != 0xD8:
        raise CodecError("not a JPEG stream (missing SOI marker)")
    if len(comment) > 0xFFFD:
        raise CodecError("comment exceeds the 64KB segment limit")
    seg = b"\xff\xfe" + (len(comment) + 2).to_bytes(2, "big") + comment
    return data[:2] + seg + data[2:]


# --- carrier I/O --------------------------------------------------------------


def encode_png(image: RasterImage) -> bytes:
    """Lossless carrier bytes for an encrypted (or plain) raster."""
    mode = "L" if image.channels == 1 else "RGB"
    pil = Image.fromarray(image.pixels[:, :, 0] if image.channels == 1 else image.pixels, mode)
    buf = io.BytesIO()
    pil.save(buf, "PNG")
    return buf.getvalue()


def load_image(path: str | os.PathLike) -> RasterImage:
    """Read a PNG or JPEG from disk as an 8-bit 1- or 3-channel raster."""
    try:
        pil = Image.open(path)
        pil.load()
    except Exception as exc:
        raise CodecError(f"cannot read image {path}: {exc}") from exc
    if pil.mode == "P":
        pil = pil.convert("RGB")
    if pil.mode == "L":
        return RasterImage(np.asarray(pil)[:, :, np.newaxis])
    if pil.mode == "RGB":
        return RasterImage(np.asarray(pil))
    raise CodecError(f"unsupported image mode {pil.mode} in {path}")


def save_image(path: str | os.PathLike, image: RasterImage) -> None:
    """Write PNG or JPEG based on the file extension (JPEG at quality 95 4:4:4)."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".jpg", ".jpeg"):
        data = encode_jpeg(image, JpegParams(quality=95, subsampling=Subsampling.S444))
    elif ext == ".png":
        data = encode_png(image)
    else:
        raise CodecError(f"unsupported output extension {ext!r} (use .png or .jpg)")
    with open(path, "wb") as fh:
        fh.write(data)
