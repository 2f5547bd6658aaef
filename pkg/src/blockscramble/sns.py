"""Deterministic stand-in for provider-side JPEG recompression.

Models the observed upload/download behavior: Twitter passes low-quality
uploads through untouched and transcodes anything at quality 85 or above to
quality 85 with 4:2:0 subsampling; Facebook recompresses every upload to
4:2:0 at a quality somewhere in 71..85 chosen by an unpublished rule, which
here defaults to a constant 85 and can be overridden.

Two documented assumptions, pinned by tests: the 4:4:4 "low/high" split
uses the same >= 85 threshold as the 4:2:0 rows, and the Facebook quality
rule is a constant unless configured otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from PIL import Image

from .core import RasterImage, SizeCapError
from .codec import (
    JpegParams,
    JpegStreamInfo,
    Subsampling,
    decode_jpeg,
    encode_jpeg,
    parse_jpeg_info,
)

# Uploads at this quality factor or above get transcoded by Twitter.
TWITTER_RECOMPRESS_THRESHOLD = 85
TWITTER_OUTPUT_QUALITY = 85

FACEBOOK_QF_RANGE = (71, 85)
DEFAULT_FACEBOOK_QF = 85


class Provider(enum.Enum):
    TWITTER = "twitter"
    FACEBOOK_HQ = "facebook-hq"
    FACEBOOK_LQ = "facebook-lq"


QualityRule = Callable[[JpegStreamInfo, "int | None"], int]


@dataclass(frozen=True)
class SnsPolicy:
    """One provider's rule set: resolution cap plus recompression quality rule."""

    provider: Provider
    max_dim: int
    recompress_quality_rule: QualityRule
    forced_subsampling: Subsampling = Subsampling.S420


def const_quality_rule(qf: int) -> QualityRule:
    if not 1 <= qf <= 100:
        raise ValueError(f"quality constant must be in [1, 100], got {qf}")
    return lambda info, quality: qf


_MAX_DIM = {
    Provider.TWITTER: 4096,
    Provider.FACEBOOK_HQ: 2048,
    Provider.FACEBOOK_LQ: 960,
}


def make_policy(provider: Provider, facebook_qf: int | QualityRule = DEFAULT_FACEBOOK_QF) -> SnsPolicy:
    """Policy table row for a provider; facebook_qf tunes the unpublished rule."""
    if provider is Provider.TWITTER:
        rule = const_quality_rule(TWITTER_OUTPUT_QUALITY)
    elif callable(facebook_qf):
        rule = facebook_qf
    else:
        rule = const_quality_rule(facebook_qf)
    return SnsPolicy(provider, _MAX_DIM[provider], rule)


@dataclass(frozen=True)
class RecompressionDecision:
    """What the provider did: passthrough, or new quality/subsampling."""

    recompressed: bool
    output_quality: int | None = None
    output_subsampling: Subsampling | None = None
    resized: bool = False

    def __post_init__(self):
        if not self.recompressed and (
            self.output_quality is not None or self.output_subsampling is not None
        ):
            raise ValueError("passthrough decisions carry no output parameters")


def decide(policy: SnsPolicy, info: JpegStreamInfo, quality: int | None) -> RecompressionDecision:
    """Recompression outcome for an upload with the given stream properties.

    quality is the upload's IJG quality factor; None (unestimable tables)
    counts as high quality, which only matters for Twitter.
    """
    if quality is not None and not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    out_sub = policy.forced_subsampling if info.component_count == 3 else None
    if policy.provider is Provider.TWITTER:
        if quality is not None and quality < TWITTER_RECOMPRESS_THRESHOLD:
            return RecompressionDecision(recompressed=False)
        return RecompressionDecision(
            recompressed=True,
            output_quality=policy.recompress_quality_rule(info, quality),
            output_subsampling=out_sub,
        )
    return RecompressionDecision(
        recompressed=True,
        output_quality=policy.recompress_quality_rule(info, quality),
        output_subsampling=out_sub,
    )


def _downscale(image: RasterImage, max_dim: int) -> RasterImage:
    scale = max_dim / max(image.width, image.height)
    w = max(1, int(image.width * scale))
    h = max(1, int(image.height * scale))
    mode = "L" if image.channels == 1 else "RGB"
    pil = Image.fromarray(
        image.pixels[:, :, 0] if image.channels == 1 else image.pixels, mode
    )
    resized = pil.resize((w, h), Image.BILINEAR)
    return RasterImage(np.asarray(resized))


def simulate(policy: SnsPolicy, upload: bytes,
             allow_downscale: bool = False) -> tuple[bytes, RecompressionDecision]:
    """Run one upload through the provider: returns (downloaded bytes, decision).

    The no-recompression path returns the upload bytes unchanged. Oversized
    uploads raise unless allow_downscale is set, in which case they are
    bilinear-resized to the cap and recompressed.
    """
    info = parse_jpeg_info(upload)
    quality = info.estimated_quality
    oversized = info.width > policy.max_dim or info.height > policy.max_dim
    if oversized and not allow_downscale:
        raise SizeCapError(
            f"{info.width}x{info.height} exceeds the {policy.provider.value} "
            f"cap of {policy.max_dim}"
        )
    decision = decide(policy, info, quality)
    if oversized:
        decision = replace(
            decision,
            recompressed=True,
            resized=True,
            output_quality=policy.recompress_quality_rule(info, quality),
            output_subsampling=(
                policy.forced_subsampling if info.component_count == 3 else None
            ),
        )
    if not decision.recompressed:
        return upload, decision
    image, _ = decode_jpeg(upload)
    if decision.resized:
        image = _downscale(image, policy.max_dim)
    params = JpegParams(
        quality=decision.output_quality,
        subsampling=decision.output_subsampling or Subsampling.S420,
    )
    return encode_jpeg(image, params), decision
