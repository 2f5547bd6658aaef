"""Reproducible experiment pipelines: the quality-vs-Qf evaluation and the
jigsaw-attack protocol, with stable CSV output.

The evaluation runs each image through encrypt -> JPEG encode -> simulated
provider recompression -> decode -> decrypt -> PSNR against the original,
for four variants: no encryption, conventional 16x16, conventional 8x8, and
the grayscale-composite 8x8 scheme. Color uploads use 4:4:4 sampling; the
grayscale composite is a single-component stream by construction.

All keys are derived from an integer seed, image id, and trial index, so a
seeded run is bit-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import os
import tempfile
from dataclasses import dataclass

from .core import GeometryError, RasterImage, Scheme, block_count
from .cipher import (
    CipherConfig,
    Orientation,
    decrypt_image,
    encrypt_image,
)
from .codec import JpegParams, Subsampling, decode_jpeg, encode_jpeg
from .keystream import KeySet, derive_subkeys
from .sns import SnsPolicy, simulate
from .attack import MetricsReport, SolverMode, attack_trial_protocol, psnr

CSV_SCHEMA_VERSION = 1
EVAL_DETAIL_HEADER = ("provider", "variant", "qf", "image_id", "psnr_db")
EVAL_SUMMARY_HEADER = ("provider", "variant", "qf", "mean_psnr_db", "image_count")
ATTACK_HEADER = ("image_id", "scheme", "block_size", "n", "dc", "nc", "lc",
                 "psnr_db", "trial_count")

VARIANT_UNENCRYPTED = "unencrypted"
VARIANT_CONVENTIONAL_16 = "conventional-16"
VARIANT_CONVENTIONAL_8 = "conventional-8"
VARIANT_GRAYSCALE_8 = "grayscale-8"
ALL_VARIANTS = (
    VARIANT_UNENCRYPTED,
    VARIANT_CONVENTIONAL_16,
    VARIANT_CONVENTIONAL_8,
    VARIANT_GRAYSCALE_8,
)

_VARIANT_CONFIG = {
    VARIANT_CONVENTIONAL_16: dict(scheme=Scheme.CONVENTIONAL, block=16),
    VARIANT_CONVENTIONAL_8: dict(scheme=Scheme.CONVENTIONAL, block=8),
    VARIANT_GRAYSCALE_8: dict(scheme=Scheme.GRAYSCALE, block=8),
}


def variant_config(variant: str, orientation: Orientation = Orientation.VERTICAL
                   ) -> CipherConfig | None:
    """CipherConfig for a named pipeline variant; None for the plain path."""
    if variant == VARIANT_UNENCRYPTED:
        return None
    try:
        entry = _VARIANT_CONFIG[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}") from None
    return CipherConfig(
        scheme=entry["scheme"],
        block_w=entry["block"],
        block_h=entry["block"],
        orientation=orientation,
        allow_nonstandard_blocks=True,
    )


def experiment_key(seed: int, *parts: str) -> bytes:
    """32-byte master secret derived from the run seed and context labels."""
    h = hashlib.sha256(b"blockscramble-experiment")
    h.update(str(seed).encode())
    for p in parts:
        h.update(b"/" + str(p).encode())
    return h.digest()


def crop_to_multiple(image: RasterImage, multiple: int) -> RasterImage:
    """Drop right/bottom margins so both dimensions divide by `multiple`."""
    w = image.width - image.width % multiple
    h = image.height - image.height % multiple
    if w < multiple or h < multiple:
        raise GeometryError(
            f"image {image.width}x{image.height} smaller than one {multiple}px block"
        )
    if (w, h) == (image.width, image.height):
        return image
    return RasterImage(image.pixels[:h, :w])


def run_single_pipeline(image: RasterImage, variant: str, qf: int,
                        policy: SnsPolicy, master: bytes,
                        orientation: Orientation = Orientation.VERTICAL) -> float:
    """One image through the upload/download pipeline; returns decrypted PSNR."""
    cfg = variant_config(variant, orientation)
    if cfg is None:
        upload_img = image
        keys = None
    else:
        keys = derive_subkeys(master, cfg.scheme)
        upload_img = encrypt_image(image, keys, cfg)
    params = JpegParams(quality=qf, subsampling=Subsampling.S444)
    upload = encode_jpeg(upload_img, params)
    download, _decision = simulate(policy, upload)
    decoded, _info = decode_jpeg(download)
    if cfg is None:
        restored = decoded
    else:
        restored = decrypt_image(decoded, keys, cfg)
    return psnr(image, restored)


def run_evaluation(images: list[tuple[str, RasterImage]], qf_values: list[int],
                   policy: SnsPolicy, seed: int = 0,
                   variants: tuple[str, ...] = ALL_VARIANTS,
                   orientation: Orientation = Orientation.VERTICAL):
    """Full evaluation grid -> (detail_rows, summary_rows)."""
    detail = []
    for variant in variants:
        for qf in qf_values:
            for image_id, image in images:
                master = experiment_key(seed, "evaluate", image_id, variant)
                value = run_single_pipeline(image, variant, qf, policy, master,
                                            orientation)
                detail.append({
                    "provider": policy.provider.value,
                    "variant": variant,
                    "qf": qf,
                    "image_id": image_id,
                    "psnr_db": round(value, 4),
                })
    summary = []
    for variant in variants:
        for qf in qf_values:
            vals = [r["psnr_db"] for r in detail
                    if r["variant"] == variant and r["qf"] == qf]
            summary.append({
                "provider": policy.provider.value,
                "variant": variant,
                "qf": qf,
                "mean_psnr_db": round(sum(vals) / len(vals), 4),
                "image_count": len(vals),
            })
    return detail, summary


@dataclass(frozen=True)
class AttackRow:
    image_id: str
    scheme: str
    block_size: int
    n: int
    report: MetricsReport
    trial_count: int

    def as_record(self) -> dict:
        return {
            "image_id": self.image_id,
            "scheme": self.scheme,
            "block_size": self.block_size,
            "n": self.n,
            "dc": round(self.report.dc, 6),
            "nc": round(self.report.nc, 6),
            "lc": round(self.report.lc, 6),
            "psnr_db": round(self.report.psnr_db, 4),
            "trial_count": self.trial_count,
        }


def trial_keys(seed: int, image_id: str, scheme: Scheme, trials: int) -> list[KeySet]:
    return [
        derive_subkeys(experiment_key(seed, "attack", image_id, str(t)), scheme)
        for t in range(trials)
    ]


def run_attack_experiment(images: list[tuple[str, RasterImage]],
                          variants: tuple[str, ...] = (VARIANT_CONVENTIONAL_16,
                                                       VARIANT_GRAYSCALE_8),
                          trials: int = 30, seed: int = 0,
                          mode: SolverMode = SolverMode.PERMUTATION_ONLY,
                          orientation: Orientation = Orientation.VERTICAL
                          ) -> list[AttackRow]:
    """Best-of-N-trials attack per image and variant, plus per-variant means."""
    rows = []
    for variant in variants:
        cfg = variant_config(variant, orientation)
        if cfg is None:
            raise ValueError("the attack protocol needs an encrypted variant")
        per_variant = []
        for image_id, image in images:
            keys = trial_keys(seed, image_id, cfg.scheme, trials)
            report = attack_trial_protocol(image, keys, cfg, mode)
            n = _variant_block_count(image, cfg)
            row = AttackRow(image_id, variant, cfg.block_w, n, report, trials)
            rows.append(row)
            per_variant.append(row)
        mean = MetricsReport(
            dc=sum(r.report.dc for r in per_variant) / len(per_variant),
            nc=sum(r.report.nc for r in per_variant) / len(per_variant),
            lc=sum(r.report.lc for r in per_variant) / len(per_variant),
            psnr_db=sum(r.report.psnr_db for r in per_variant) / len(per_variant),
        )
        rows.append(AttackRow("MEAN", variant, per_variant[0].block_size,
                              per_variant[0].n, mean, trials))
    return rows


def _variant_block_count(image: RasterImage, cfg: CipherConfig) -> int:
    if cfg.scheme is Scheme.GRAYSCALE:
        if cfg.orientation is Orientation.VERTICAL:
            return block_count(image.width, image.height * 3, cfg.block_w, cfg.block_h)
        return block_count(image.width * 3, image.height, cfg.block_w, cfg.block_h)
    return block_count(image.width, image.height, cfg.block_w, cfg.block_h)


def write_csv(path, header: tuple[str, ...], records: list[dict]) -> None:
    """Atomic CSV write (temp file + rename) with the exact header given."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(header))
            writer.writeheader()
            for rec in records:
                writer.writerow(rec)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plot_evaluation(summary: list[dict], path) -> None:
    """PSNR-vs-Qf curves per variant, written as SVG (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    variants = sorted({r["variant"] for r in summary})
    for variant in variants:
        pts = sorted(
            (r["qf"], r["mean_psnr_db"]) for r in summary if r["variant"] == variant
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=variant)
    provider = summary[0]["provider"] if summary else "?"
    ax.set_xlabel("upload quality factor")
    ax.set_ylabel("mean decrypted PSNR [dB]")
    ax.set_title(f"quality after simulated {provider} recompression")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
