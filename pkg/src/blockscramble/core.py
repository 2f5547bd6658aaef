"""Shared raster, block-geometry, and key-scheme types.

Everything here is an immutable value object: pixel buffers are copied on
construction and marked read-only, so instances are safe to share across
threads. All operations are pure functions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

BIT_DEPTH = 8
SAMPLE_MAX = (1 << BIT_DEPTH) - 1


class BlockScrambleError(Exception):
    """Base class for all library errors."""


class GeometryError(BlockScrambleError):
    """Image or block geometry is invalid or inconsistent."""


class KeyFormatError(BlockScrambleError):
    """Key material has the wrong length or encoding."""


class CodecError(BlockScrambleError):
    """A byte stream or metadata record could not be encoded or decoded."""


class SizeCapError(BlockScrambleError):
    """An upload exceeds the provider's resolution cap."""


class Scheme(enum.Enum):
    """Which encryption scheme a key set or config is bound to."""

    CONVENTIONAL = "conventional"
    GRAYSCALE = "grayscale"


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Decoded 8-bit raster, shape (height, width, channels), channels 1 or 3.

    The sample array is copied and frozen; ``samples`` exposes the row-major
    interleaved view. Grayscale composites use channels=1, RGB originals 3.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise GeometryError(
                f"expected samples shaped (height, width, 1|3), got {arr.shape}"
            )
        if arr.dtype != np.uint8:
            raise GeometryError(
                f"samples must be uint8 ({BIT_DEPTH}-bit), got dtype {arr.dtype}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise GeometryError(f"image dimensions must be >= 1, got {arr.shape}")
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def bit_depth(self) -> int:
        return BIT_DEPTH

    @property
    def samples(self) -> np.ndarray:
        """Flat row-major interleaved sample view (length w*h*channels)."""
        return self.pixels.reshape(-1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"RasterImage({self.width}x{self.height}, {self.channels}ch)"


@dataclass(frozen=True)
class BlockGeometry:
    """Grid of non-overlapping block_w x block_h blocks: cols x rows of them."""

    block_w: int
    block_h: int
    cols: int
    rows: int

    def __post_init__(self):
        for name in ("block_w", "block_h", "cols", "rows"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise GeometryError(f"{name} must be a positive integer, got {v!r}")

    @property
    def n(self) -> int:
        """Total block count (cols * rows)."""
        return self.cols * self.rows

    @property
    def width(self) -> int:
        return self.cols * self.block_w

    @property
    def height(self) -> int:
        return self.rows * self.block_h

    @classmethod
    def for_image(cls, width: int, height: int, block_w: int, block_h: int) -> "BlockGeometry":
        """Exact tiling of a width x height image; non-divisible dims are rejected.

        Silent cropping would make decryption ambiguous, so margins are never
        discarded here; callers crop explicitly first if they want that.
        """
        if block_w < 1 or block_h < 1 or width < 1 or height < 1:
            raise GeometryError("image and block dimensions must be >= 1")
        if width % block_w or height % block_h:
            raise GeometryError(
                f"image {width}x{height} is not divisible into "
                f"{block_w}x{block_h} blocks"
            )
        return cls(block_w, block_h, width // block_w, height // block_h)


def block_count(width: int, height: int, block_w: int, block_h: int) -> int:
    """Number of whole block_w x block_h blocks in a width x height image.

    floor(width/block_w) * floor(height/block_h); remainders are discarded.
    """
    for name, v in (("width", width), ("height", height),
                    ("block_w", block_w), ("block_h", block_h)):
        if not isinstance(v, int) or v < 1:
            raise GeometryError(f"{name} must be a positive integer, got {v!r}")
    return (width // block_w) * (height // block_h)


def split_into_blocks(image: RasterImage, geom: BlockGeometry) -> np.ndarray:
    """Split into blocks, returned as (n, block_h, block_w, channels) uint8.

    Scan order is row-major: left-to-right, top-to-bottom. The image must
    tile exactly; see BlockGeometry.for_image.
    """
    arr = image.pixels
    if image.width != geom.width or image.height != geom.height:
        raise GeometryError(
            f"image {image.width}x{image.height} does not match geometry "
            f"{geom.width}x{geom.height}"
        )
    c = arr.shape[2]
    blocks = (
        arr.reshape(geom.rows, geom.block_h, geom.cols, geom.block_w, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(geom.n, geom.block_h, geom.block_w, c)
    )
    return np.ascontiguousarray(blocks)


def assemble_blocks(blocks: np.ndarray, geom: BlockGeometry) -> RasterImage:
    """Inverse of split_into_blocks: place blocks back in row-major order."""
    blocks = np.asarray(blocks)
    if blocks.ndim == 3:
        blocks = blocks[:, :, :, np.newaxis]
    if blocks.ndim != 4:
        raise GeometryError(f"expected (n, h, w, c) block array, got {blocks.shape}")
    n, bh, bw, c = blocks.shape
    if n != geom.n:
        raise GeometryError(f"expected {geom.n} blocks, got {n}")
    if bh != geom.block_h or bw != geom.block_w:
        raise GeometryError(
            f"block shape {bw}x{bh} does not match geometry "
            f"{geom.block_w}x{geom.block_h}"
        )
    if c not in (1, 3):
        raise GeometryError(f"blocks must have 1 or 3 channels, got {c}")
    arr = (
        blocks.reshape(geom.rows, geom.cols, bh, bw, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(geom.rows * bh, geom.cols * bw, c)
    )
    return RasterImage(arr)
