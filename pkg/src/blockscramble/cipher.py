"""Block-scrambling encryption: the conventional RGB scheme and the
grayscale-composite scheme.

The conventional scheme applies, per 16x16 block: keyed permutation, a
dihedral rotate/invert, a conditional negative-positive (sample XOR 255),
and a keyed shuffle of the three color channels. The grayscale scheme first
stacks the R, G, B planes into one single-channel composite, then applies
the first three steps with 8x8 blocks; there is no color-shuffle step.

Decryption applies the exact inverse steps in reverse order. On lossless
carriers the round trip is bit-exact; on JPEG-decoded data it inverts the
scramble around whatever distortion the codec introduced.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .core import (
    BIT_DEPTH,
    SAMPLE_MAX,
    BlockGeometry,
    CodecError,
    GeometryError,
    RasterImage,
    Scheme,
    assemble_blocks,
    split_into_blocks,
)
from .keystream import (
    KEYSTREAM_ALGORITHM_ID,
    KeySet,
    gen_color_perms,
    gen_d4_codes,
    gen_neg_flags,
    gen_permutation,
)

FORMAT_VERSION = 1

DEFAULT_BLOCK_SIZE = {Scheme.CONVENTIONAL: 16, Scheme.GRAYSCALE: 8}

# All orderings of (R, G, B) in lexicographic order; index 0 is the identity.
COLOR_PERMS: tuple[tuple[int, int, int], ...] = tuple(permutations((0, 1, 2)))


class Orientation(enum.Enum):
    """How the three channel planes stack into the grayscale composite."""

    VERTICAL = "vertical"      # R rows, then G rows, then B rows: 3x height
    HORIZONTAL = "horizontal"  # side by side: 3x width


@dataclass(frozen=True)
class CipherConfig:
    """Scheme plus block geometry and composite orientation.

    The conventional scheme defaults to 16x16 blocks: anything smaller
    collides with the JPEG MCU under 4:2:0 chroma subsampling. Other sizes
    (notably the 8x8 comparison point) require allow_nonstandard_blocks.
    """

    scheme: Scheme
    block_w: int = 0
    block_h: int = 0
    orientation: Orientation = Orientation.VERTICAL
    allow_nonstandard_blocks: bool = False

    def __post_init__(self):
        default = DEFAULT_BLOCK_SIZE[self.scheme]
        if self.block_w == 0:
            object.__setattr__(self, "block_w", default)
        if self.block_h == 0:
            object.__setattr__(self, "block_h", default)
        if self.block_w < 1 or self.block_h < 1:
            raise GeometryError("block dimensions must be >= 1")
        if self.block_w != self.block_h:
            raise GeometryError(
                "blocks must be square: the rotate/invert step does not "
                f"preserve {self.block_w}x{self.block_h} geometry"
            )
        if (
            self.scheme is Scheme.CONVENTIONAL
            and self.block_w != DEFAULT_BLOCK_SIZE[Scheme.CONVENTIONAL]
            and not self.allow_nonstandard_blocks
        ):
            raise GeometryError(
                f"conventional scheme uses 16x16 blocks; {self.block_w}x"
                f"{self.block_h} breaks JPEG 4:2:0 MCU alignment "
                "(pass allow_nonstandard_blocks=True to override)"
            )


@dataclass(frozen=True)
class TransformSpec:
    """Per-block encryption decisions derived from a KeySet.

    permutation is a bijection on [0, n): encrypted position i takes source
    block permutation[i]. color_perms is None under the grayscale scheme.
    """

    permutation: np.ndarray
    d4_codes: np.ndarray
    neg_flags: np.ndarray
    color_perms: np.ndarray | None

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.int64)
        n = len(perm)
        if n < 1:
            raise GeometryError("transform spec needs at least one block")
        if not np.array_equal(np.sort(perm), np.arange(n)):
            raise GeometryError("permutation is not a bijection on [0, n)")
        d4 = np.asarray(self.d4_codes, dtype=np.uint8)
        neg = np.asarray(self.neg_flags, dtype=np.uint8)
        if len(d4) != n or len(neg) != n:
            raise GeometryError("decision arrays must all have length n")
        if d4.max(initial=0) > 7 or neg.max(initial=0) > 1:
            raise GeometryError("d4 codes must be in [0,8) and neg flags in {0,1}")
        cp = self.color_perms
        if cp is not None:
            cp = np.asarray(cp, dtype=np.uint8)
            if len(cp) != n or cp.max(initial=0) > 5:
                raise GeometryError("color perms must have length n, values in [0,6)")
        for name, arr in (("permutation", perm), ("d4_codes", d4),
                          ("neg_flags", neg), ("color_perms", cp)):
            if arr is not None:
                arr = arr.copy()
                arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return len(self.permutation)


def build_transform_spec(keys: KeySet, n: int) -> TransformSpec:
    """Draw all per-block decisions for n blocks from the key set.

    Decisions come from four independent keystreams (one per subkey), so the
    same call is reproducible bit-exactly on any platform.
    """
    color = None
    if keys.scheme is Scheme.CONVENTIONAL:
        color = gen_color_perms(keys.k4, n)
    return TransformSpec(
        permutation=gen_permutation(keys.k1, n),
        d4_codes=gen_d4_codes(keys.k2, n),
        neg_flags=gen_neg_flags(keys.k3, n),
        color_perms=color,
    )


# --- per-block primitives ---------------------------------------------------


def negative_positive(block: np.ndarray, flag: int, bit_depth: int = BIT_DEPTH) -> np.ndarray:
    """Conditional sample inversion: flag=1 XORs every sample with 2^L - 1."""
    if bit_depth != BIT_DEPTH:
        raise ValueError(f"only {BIT_DEPTH}-bit samples are supported")
    if flag not in (0, 1):
        raise ValueError(f"flag must be 0 or 1, got {flag!r}")
    block = np.asarray(block)
    return block ^ np.uint8(SAMPLE_MAX) if flag else block.copy()


def apply_d4(block: np.ndarray, code: int) -> np.ndarray:
    """Apply one of the 8 dihedral transforms of the square.

    code = (flip << 2) | rotation: rotate by 90deg-clockwise steps
    (rotation in 0..3), then mirror left-right if flip is set. Code 0 is the
    identity. 90/270-degree rotations require a square block.
    """
    if not 0 <= code < 8:
        raise ValueError(f"d4 code must be in [0, 8), got {code!r}")
    block = np.asarray(block)
    rot = code & 3
    flip = code >> 2
    if rot % 2 == 1 and block.shape[0] != block.shape[1]:
        raise GeometryError(
            f"rotation code {code} needs a square block, got "
            f"{block.shape[1]}x{block.shape[0]}"
        )
    out = np.rot90(block, k=-rot, axes=(0, 1))
    if flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def d4_inverse(code: int) -> int:
    """Code of the inverse dihedral transform (reflections are involutions)."""
    if not 0 <= code < 8:
        raise ValueError(f"d4 code must be in [0, 8), got {code!r}")
    return code if code >= 4 else (-code) % 4


def shuffle_colors(block: np.ndarray, code: int) -> np.ndarray:
    """Reorder the three channels per the lexicographic permutation index."""
    if not 0 <= code < 6:
        raise ValueError(f"color code must be in [0, 6), got {code!r}")
    block = np.asarray(block)
    if block.ndim < 1 or block.shape[-1] != 3:
        raise GeometryError("color shuffle needs a 3-channel block")
    return np.ascontiguousarray(block[..., COLOR_PERMS[code]])


def color_perm_inverse(code: int) -> int:
    """Index of the inverse channel permutation."""
    if not 0 <= code < 6:
        raise ValueError(f"color code must be in [0, 6), got {code!r}")
    perm = COLOR_PERMS[code]
    inv = tuple(perm.index(i) for i in range(3))
    return COLOR_PERMS.index(inv)


# --- grayscale composite ----------------------------------------------------


def to_grayscale_composite(image: RasterImage, orientation: Orientation) -> RasterImage:
    """Stack the R, G, B planes into one single-channel image.

    Vertical stacking triples the height (R rows, then G, then B);
    horizontal stacking triples the width. Samples are copied verbatim, no
    color conversion happens.
    """
    if image.channels != 3:
        raise GeometryError(f"composite needs a 3-channel image, got {image.channels}")
    planes = [image.pixels[:, :, i] for i in range(3)]
    axis = 0 if orientation is Orientation.VERTICAL else 1
    return RasterImage(np.concatenate(planes, axis=axis))


def from_grayscale_composite(image: RasterImage, orientation: Orientation) -> RasterImage:
    """Inverse of to_grayscale_composite: split the stack back into RGB."""
    if image.channels != 1:
        raise GeometryError(f"composite must be single-channel, got {image.channels}")
    arr = image.pixels[:, :, 0]
    axis = 0 if orientation is Orientation.VERTICAL else 1
    if arr.shape[axis] % 3:
        raise GeometryError(
            f"composite dimension {arr.shape[axis]} along the stacking axis "
            "is not divisible by 3"
        )
    r, g, b = np.split(arr, 3, axis=axis)
    return RasterImage(np.stack([r, g, b], axis=-1))


# --- whole-image encryption -------------------------------------------------


def _apply_spec(blocks: np.ndarray, spec: TransformSpec) -> np.ndarray:
    out = blocks[spec.permutation].copy()
    d4 = np.asarray(spec.d4_codes)
    for code in range(1, 8):
        mask = d4 == code
        if not mask.any():
            continue
        sub = out[mask]
        rot = code & 3
        if rot:
            sub = np.rot90(sub, k=-rot, axes=(1, 2))
        if code >> 2:
            sub = sub[:, :, ::-1]
        out[mask] = sub
    neg = np.asarray(spec.neg_flags).astype(bool)
    if neg.any():
        out[neg] ^= np.uint8(SAMPLE_MAX)
    if spec.color_perms is not None:
        cp = np.asarray(spec.color_perms)
        for code in range(1, 6):
            mask = cp == code
            if mask.any():
                out[mask] = out[mask][:, :, :, COLOR_PERMS[code]]
    return out


def _invert_spec(blocks: np.ndarray, spec: TransformSpec) -> np.ndarray:
    out = blocks.copy()
    if spec.color_perms is not None:
        cp = np.asarray(spec.color_perms)
        for code in range(1, 6):
            mask = cp == code
            if mask.any():
                out[mask] = out[mask][:, :, :, COLOR_PERMS[color_perm_inverse(code)]]
    neg = np.asarray(spec.neg_flags).astype(bool)
    if neg.any():
        out[neg] ^= np.uint8(SAMPLE_MAX)
    d4 = np.asarray(spec.d4_codes)
    for code in range(1, 8):
        mask = d4 == code
        if not mask.any():
            continue
        sub = out[mask]
        inv = d4_inverse(code)
        rot = inv & 3
        if rot:
            sub = np.rot90(sub, k=-rot, axes=(1, 2))
        if inv >> 2:
            sub = sub[:, :, ::-1]
        out[mask] = sub
    plain = np.empty_like(out)
    plain[spec.permutation] = out
    return plain


def _check_scheme(keys: KeySet, cfg: CipherConfig, scheme: Scheme) -> None:
    if cfg.scheme is not scheme:
        raise GeometryError(f"config scheme {cfg.scheme.value} != {scheme.value}")
    if keys.scheme is not scheme:
        raise GeometryError(f"key set is bound to scheme {keys.scheme.value}")


def encrypt_conventional(image: RasterImage, keys: KeySet,
                         cfg: CipherConfig | None = None) -> RasterImage:
    """Encrypt an RGB image with the four-step conventional scheme.

    The permutation, rotate/invert, and negative-positive decisions are
    shared by all three channels; only the color shuffle mixes channels.
    """
    cfg = cfg or CipherConfig(Scheme.CONVENTIONAL)
    _check_scheme(keys, cfg, Scheme.CONVENTIONAL)
    if image.channels != 3:
        raise GeometryError(f"conventional scheme needs 3 channels, got {image.channels}")
    geom = BlockGeometry.for_image(image.width, image.height, cfg.block_w, cfg.block_h)
    spec = build_transform_spec(keys, geom.n)
    return assemble_blocks(_apply_spec(split_into_blocks(image, geom), spec), geom)


def decrypt_conventional(image: RasterImage, keys: KeySet,
                         cfg: CipherConfig | None = None) -> RasterImage:
    """Exact inverse of encrypt_conventional: inverse steps in reverse order."""
    cfg = cfg or CipherConfig(Scheme.CONVENTIONAL)
    _check_scheme(keys, cfg, Scheme.CONVENTIONAL)
    if image.channels != 3:
        raise GeometryError(f"conventional scheme needs 3 channels, got {image.channels}")
    geom = BlockGeometry.for_image(image.width, image.height, cfg.block_w, cfg.block_h)
    spec = build_transform_spec(keys, geom.n)
    return assemble_blocks(_invert_spec(split_into_blocks(image, geom), spec), geom)


def encrypt_grayscale(image: RasterImage, keys: KeySet,
                      cfg: CipherConfig | None = None) -> RasterImage:
    """Encrypt via the grayscale composite: stack channels, then permute,
    rotate/invert, and negative-positive with 8x8 blocks. No color shuffle."""
    cfg = cfg or CipherConfig(Scheme.GRAYSCALE)
    _check_scheme(keys, cfg, Scheme.GRAYSCALE)
    composite = to_grayscale_composite(image, cfg.orientation)
    geom = BlockGeometry.for_image(
        composite.width, composite.height, cfg.block_w, cfg.block_h
    )
    spec = build_transform_spec(keys, geom.n)
    return assemble_blocks(_apply_spec(split_into_blocks(composite, geom), spec), geom)


def decrypt_grayscale(image: RasterImage, keys: KeySet,
                      cfg: CipherConfig | None = None) -> RasterImage:
    """Invert the grayscale scheme and split the composite back to RGB."""
    cfg = cfg or CipherConfig(Scheme.GRAYSCALE)
    _check_scheme(keys, cfg, Scheme.GRAYSCALE)
    if image.channels != 1:
        raise GeometryError(f"grayscale scheme decrypts 1 channel, got {image.channels}")
    geom = BlockGeometry.for_image(image.width, image.height, cfg.block_w, cfg.block_h)
    spec = build_transform_spec(keys, geom.n)
    composite = assemble_blocks(_invert_spec(split_into_blocks(image, geom), spec), geom)
    return from_grayscale_composite(composite, cfg.orientation)


def encrypt_image(image: RasterImage, keys: KeySet, cfg: CipherConfig) -> RasterImage:
    """Dispatch to the scheme selected by the config."""
    if cfg.scheme is Scheme.CONVENTIONAL:
        return encrypt_conventional(image, keys, cfg)
    return encrypt_grayscale(image, keys, cfg)


def decrypt_image(image: RasterImage, keys: KeySet, cfg: CipherConfig) -> RasterImage:
    if cfg.scheme is Scheme.CONVENTIONAL:
        return decrypt_conventional(image, keys, cfg)
    return decrypt_grayscale(image, keys, cfg)


def estimate_keyspace(scheme: Scheme, n: int) -> float:
    """log2 of the number of distinct per-block decision combinations.

    Conventional: n! permutations * 8^n dihedral * 2^n negation * 6^n color.
    Grayscale drops the color term.
    """
    if not isinstance(n, int) or n < 1:
        raise GeometryError(f"block count must be >= 1, got {n!r}")
    bits = math.lgamma(n + 1) / math.log(2) + 3 * n + n
    if scheme is Scheme.CONVENTIONAL:
        bits += n * math.log2(6)
    return bits


# --- metadata sidecar --------------------------------------------------------

# JSON sidecar describing how an image was encrypted. It never carries key
# material; it exists so decryption does not have to guess geometry.

_METADATA_KEYS = {
    "format_version", "scheme", "block_w", "block_h", "orientation",
    "original_width", "original_height", "keystream_algorithm_id",
}


def build_metadata(cfg: CipherConfig, original_width: int, original_height: int) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "scheme": cfg.scheme.value,
        "block_w": cfg.block_w,
        "block_h": cfg.block_h,
        "orientation": cfg.orientation.value,
        "original_width": original_width,
        "original_height": original_height,
        "keystream_algorithm_id": KEYSTREAM_ALGORITHM_ID,
    }


def metadata_to_json(meta: dict) -> str:
    return json.dumps(meta, sort_keys=True)


def parse_metadata(source: str | bytes | dict) -> dict:
    """Validate a sidecar record; raises CodecError on anything malformed."""
    if isinstance(source, (str, bytes)):
        try:
            meta = json.loads(source)
        except (ValueError, UnicodeDecodeError) as exc:
            raise CodecError(f"metadata is not valid JSON: {exc}") from exc
    else:
        meta = dict(source)
    if not isinstance(meta, dict) or not _METADATA_KEYS.issubset(meta):
        missing = _METADATA_KEYS - set(meta) if isinstance(meta, dict) else _METADATA_KEYS
        raise CodecError(f"metadata missing fields: {sorted(missing)}")
    if meta["format_version"] != FORMAT_VERSION:
        raise CodecError(f"unsupported metadata format_version {meta['format_version']!r}")
    if meta["keystream_algorithm_id"] != KEYSTREAM_ALGORITHM_ID:
        raise CodecError(
            f"unsupported keystream algorithm {meta['keystream_algorithm_id']!r}"
        )
    try:
        Scheme(meta["scheme"])
        Orientation(meta["orientation"])
    except ValueError as exc:
        raise CodecError(str(exc)) from exc
    for k in ("block_w", "block_h", "original_width", "original_height"):
        if not isinstance(meta[k], int) or meta[k] < 1:
            raise CodecError(f"metadata field {k} must be a positive integer")
    return meta


def config_from_metadata(meta: dict) -> tuple[CipherConfig, int, int]:
    """Rebuild the cipher config (plus original dimensions) from a sidecar."""
    meta = parse_metadata(meta)
    cfg = CipherConfig(
        scheme=Scheme(meta["scheme"]),
        block_w=meta["block_w"],
        block_h=meta["block_h"],
        orientation=Orientation(meta["orientation"]),
        allow_nonstandard_blocks=True,
    )
    return cfg, meta["original_width"], meta["original_height"]


__all__ = [
    "COLOR_PERMS", "CipherConfig", "DEFAULT_BLOCK_SIZE", "FORMAT_VERSION",
    "Orientation", "TransformSpec", "apply_d4", "build_metadata",
    "build_transform_spec", "color_perm_inverse", "config_from_metadata",
    "d4_inverse", "decrypt_conventional", "decrypt_grayscale", "decrypt_image",
    "encrypt_conventional", "encrypt_grayscale", "encrypt_image",
    "estimate_keyspace", "from_grayscale_composite", "metadata_to_json",
    "negative_positive", "parse_metadata", "shuffle_colors",
    "to_grayscale_composite",
]
