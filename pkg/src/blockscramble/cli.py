"""Command-line front end wiring the library into reproducible pipelines.

Subcommands: keygen, encrypt, decrypt, jpeg-roundtrip, sns-sim, evaluate,
attack. Flags may also come from a JSON config file via --config; explicit
flags win over config values. Exit codes: 0 success, 1 usage error, 2 data
error.
"""

from __future__ import annotations

import argparse
import glob
import json
import math
import os
import sys

from . import __version__
from .core import BlockScrambleError, GeometryError, Scheme
from .cipher import (
    CipherConfig,
    Orientation,
    build_metadata,
    config_from_metadata,
    decrypt_image,
    encrypt_image,
    estimate_keyspace,
    metadata_to_json,
    parse_metadata,
)
from .codec import (
    JpegParams,
    Subsampling,
    decode_jpeg,
    encode_jpeg,
    encode_png,
    insert_comment,
    load_image,
    parse_jpeg_info,
)
from .keystream import (
    KeySet,
    derive_subkeys,
    generate_master_key,
    read_key_file,
    read_subkey_file,
    write_key_file,
)
from .sns import Provider, const_quality_rule, make_policy, simulate
from .attack import SolverMode, psnr
from .experiments import (
    ALL_VARIANTS,
    ATTACK_HEADER,
    EVAL_DETAIL_HEADER,
    EVAL_SUMMARY_HEADER,
    VARIANT_CONVENTIONAL_16,
    VARIANT_GRAYSCALE_8,
    crop_to_multiple,
    run_attack_experiment,
    run_evaluation,
    write_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _load_config_defaults(argv: list[str], parser: _Parser) -> list[str]:
    """Apply --config JSON values as parser defaults (flags still win)."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    try:
        with open(known.config) as fh:
            values = json.load(fh)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config file: {exc}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    subparsers = getattr(parser, "subcommand_parsers", {})
    actions_by_dest = {
        a.dest: a
        for p in (parser, *subparsers.values())
        for a in p._actions
    }
    converted = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        action = actions_by_dest.get(dest)
        if action is not None and action.type is not None and isinstance(value, str):
            try:
                value = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                parser.error(f"config value for {key!r}: {exc}")
        converted[dest] = value
    # subcommands parse into a fresh namespace, so defaults must land on
    # every subparser, not just the root
    parser.set_defaults(**converted)
    for sp in subparsers.values():
        sp.set_defaults(**converted)
    return argv


def _scheme(value: str) -> Scheme:
    try:
        return Scheme(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"scheme must be one of {[s.value for s in Scheme]}, got {value!r}"
        )


def _orientation(value: str) -> Orientation:
    try:
        return Orientation(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"orientation must be vertical|horizontal")


def _subsampling(value: str) -> Subsampling:
    mapping = {"444": Subsampling.S444, "4:4:4": Subsampling.S444,
               "420": Subsampling.S420, "4:2:0": Subsampling.S420}
    if value not in mapping:
        raise argparse.ArgumentTypeError("subsampling must be 444 or 420")
    return mapping[value]


def _provider(value: str) -> Provider:
    try:
        return Provider(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"provider must be one of {[p.value for p in Provider]}"
        )


def _facebook_rule(value: str):
    if not value.startswith("const:"):
        raise argparse.ArgumentTypeError("facebook qf rule must look like const:<n>")
    try:
        return const_quality_rule(int(value.split(":", 1)[1]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _gather_images(pattern: str, crop_multiple: int | None):
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise BlockScrambleError(f"no images match {pattern!r}")
    images = []
    for path in paths:
        img = load_image(path)
        if img.channels != 3:
            raise GeometryError(f"{path}: evaluation needs RGB inputs")
        if crop_multiple:
            img = crop_to_multiple(img, crop_multiple)
        images.append((os.path.splitext(os.path.basename(path))[0], img))
    return images


# --- subcommand handlers -------------------------------------------------------


def _cmd_keygen(args) -> int:
    master = generate_master_key()
    write_key_file(args.out, master, hex_encoding=args.hex)
    print(f"wrote {'hex' if args.hex else 'raw'} key to {args.out}")
    return EXIT_OK


def _build_cipher_config(args) -> CipherConfig:
    block = args.block_size or 0
    return CipherConfig(
        scheme=args.scheme,
        block_w=block,
        block_h=block,
        orientation=args.orientation,
        allow_nonstandard_blocks=args.allow_nonstandard_blocks,
    )


def _load_keys(args, scheme: Scheme) -> KeySet:
    """One master file (derives K1..K4) or four explicit subkeys."""
    if getattr(args, "subkeys", None):
        return KeySet.from_subkeys(scheme, *read_subkey_file(args.subkeys))
    return derive_subkeys(read_key_file(args.key), scheme)


def _cmd_encrypt(args) -> int:
    image = load_image(args.input)
    if image.channels != 3:
        raise GeometryError("encryption expects an RGB input image")
    if args.crop_to_blocks:
        multiple = (args.block_size or (16 if args.scheme is Scheme.CONVENTIONAL else 8))
        if args.scheme is Scheme.GRAYSCALE:
            multiple = max(multiple, 8)
        image = crop_to_multiple(image, multiple)
    cfg = _build_cipher_config(args)
    keys = _load_keys(args, cfg.scheme)
    encrypted = encrypt_image(image, keys, cfg)
    meta = build_metadata(cfg, image.width, image.height)

    ext = os.path.splitext(args.out)[1].lower()
    if ext in (".jpg", ".jpeg"):
        params = JpegParams(quality=args.quality, subsampling=args.subsampling)
        data = encode_jpeg(encrypted, params)
        if args.embed_metadata:
            data = insert_comment(data, metadata_to_json(meta).encode())
    elif ext == ".png":
        data = encode_png(encrypted)
    else:
        raise BlockScrambleError(f"unsupported output extension {ext!r} (use .png/.jpg)")
    _atomic_write(args.out, data)
    sidecar = args.meta or args.out + ".meta.json"
    _atomic_write(sidecar, (metadata_to_json(meta) + "\n").encode())
    geom_n = (encrypted.width // cfg.block_w) * (encrypted.height // cfg.block_h)
    print(f"encrypted {args.input} -> {args.out} "
          f"({cfg.scheme.value}, {cfg.block_w}x{cfg.block_h}, n={geom_n}, "
          f"keyspace~2^{estimate_keyspace(cfg.scheme, geom_n):.0f})")
    print(f"metadata sidecar: {sidecar}")
    return EXIT_OK


def _read_metadata_for(args, path: str) -> dict | None:
    if args.meta and os.path.exists(args.meta):
        with open(args.meta) as fh:
            return parse_metadata(fh.read())
    default_sidecar = path + ".meta.json"
    if os.path.exists(default_sidecar):
        with open(default_sidecar) as fh:
            return parse_metadata(fh.read())
    if path.lower().endswith((".jpg", ".jpeg")):
        with open(path, "rb") as fh:
            info = parse_jpeg_info(fh.read())
        for comment in info.comments:
            try:
                return parse_metadata(comment)
            except BlockScrambleError:
                continue
    return None


def _cmd_decrypt(args) -> int:
    meta = _read_metadata_for(args, args.input)
    if meta is None:
        if args.scheme is None:
            raise BlockScrambleError(
                "no metadata sidecar found; pass --scheme/--block-size/--orientation"
            )
        cfg = _build_cipher_config(args)
    else:
        cfg, _ow, _oh = config_from_metadata(meta)
    image = load_image(args.input)
    keys = _load_keys(args, cfg.scheme)
    restored = decrypt_image(image, keys, cfg)
    ext = os.path.splitext(args.out)[1].lower()
    if ext == ".png":
        data = encode_png(restored)
    elif ext in (".jpg", ".jpeg"):
        data = encode_jpeg(restored, JpegParams(quality=args.quality,
                                                subsampling=args.subsampling))
    else:
        raise BlockScrambleError(f"unsupported output extension {ext!r} (use .png/.jpg)")
    _atomic_write(args.out, data)
    print(f"decrypted {args.input} -> {args.out} ({cfg.scheme.value})")
    return EXIT_OK


def _cmd_jpeg_roundtrip(args) -> int:
    image = load_image(args.input)
    params = JpegParams(quality=args.quality, subsampling=args.subsampling)
    data = encode_jpeg(image, params)
    decoded, info = decode_jpeg(data)
    value = psnr(image, decoded)
    if args.out:
        _atomic_write(args.out, data)
    print(f"encoded {args.input}: {len(data)} bytes, "
          f"components={info.component_count}, "
          f"sampling={info.subsampling.value if info.subsampling else 'n/a'}, "
          f"estimated_qf={info.estimated_quality}, "
          f"psnr={'inf' if math.isinf(value) else f'{value:.2f}'} dB")
    return EXIT_OK


def _cmd_sns_sim(args) -> int:
    with open(args.input, "rb") as fh:
        upload = fh.read()
    policy = make_policy(args.provider, args.facebook_qf)
    download, decision = simulate(policy, upload, allow_downscale=args.allow_downscale)
    _atomic_write(args.out, download)
    print(json.dumps({
        "provider": policy.provider.value,
        "recompressed": decision.recompressed,
        "output_quality": decision.output_quality,
        "output_subsampling": (decision.output_subsampling.value
                               if decision.output_subsampling else None),
        "resized": decision.resized,
        "passthrough_identical": download == upload,
    }))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    images = _gather_images(args.images, crop_multiple=16 if args.crop_to_blocks else None)
    qfs = list(range(args.qf_min, args.qf_max + 1, args.qf_step))
    policy = make_policy(args.provider, args.facebook_qf)
    variants = tuple(args.variants.split(",")) if args.variants else ALL_VARIANTS
    for v in variants:
        if v not in ALL_VARIANTS:
            raise BlockScrambleError(f"unknown variant {v!r}; choose from {ALL_VARIANTS}")
    detail, summary = run_evaluation(images, qfs, policy, seed=args.seed,
                                     variants=variants, orientation=args.orientation)
    os.makedirs(args.out_dir, exist_ok=True)
    detail_path = os.path.join(args.out_dir, f"evaluate_{policy.provider.value}_detail.csv")
    summary_path = os.path.join(args.out_dir, f"evaluate_{policy.provider.value}_summary.csv")
    write_csv(detail_path, EVAL_DETAIL_HEADER, detail)
    write_csv(summary_path, EVAL_SUMMARY_HEADER, summary)
    print(f"wrote {detail_path} ({len(detail)} rows) and {summary_path}")
    if args.plot:
        from .experiments import plot_evaluation

        plot_path = os.path.join(args.out_dir, f"evaluate_{policy.provider.value}.svg")
        plot_evaluation(summary, plot_path)
        print(f"wrote {plot_path}")
    return EXIT_OK


def _cmd_attack(args) -> int:
    images = _gather_images(args.images, crop_multiple=16 if args.crop_to_blocks else None)
    variants = (tuple(args.variants.split(",")) if args.variants
                else (VARIANT_CONVENTIONAL_16, VARIANT_GRAYSCALE_8))
    mode = SolverMode.WITH_D4 if args.search_orientations else SolverMode.PERMUTATION_ONLY
    rows = run_attack_experiment(images, variants=variants, trials=args.trials,
                                 seed=args.seed, mode=mode,
                                 orientation=args.orientation)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "attack_results.csv")
    write_csv(path, ATTACK_HEADER, [r.as_record() for r in rows])
    print(f"wrote {path} ({len(rows)} rows)")
    for row in rows:
        if row.image_id == "MEAN":
            rec = row.as_record()
            print(f"  {row.scheme}: n={row.n} "
                  f"Dc={rec['dc']:.4f} Nc={rec['nc']:.4f} Lc={rec['lc']:.4f}")
    return EXIT_OK


# --- parser assembly ------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="blockscramble",
        description="Block-scrambling image encryption for encryption-then-"
                    "compression pipelines, with SNS recompression simulation "
                    "and a jigsaw-solver attack harness.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommand_parsers = {}
    _add_parser = sub.add_parser

    def add_parser(name, **kwargs):
        p = _add_parser(name, **kwargs)
        parser.subcommand_parsers[name] = p
        return p

    sub.add_parser = add_parser

    p = sub.add_parser("keygen", help="write a fresh 32-byte master key")
    p.add_argument("--out")
    p.add_argument("--hex", action="store_true", help="write 64 hex chars + newline")
    p.set_defaults(func=_cmd_keygen, required_dests=("out",))

    def add_cipher_flags(p, scheme_required):
        p.add_argument("--scheme", type=_scheme, default=None)
        p.add_argument("--block-size", type=int, default=None,
                       help="square block edge (default: 16 conventional, 8 grayscale)")
        p.add_argument("--orientation", type=_orientation,
                       default=Orientation.VERTICAL)
        p.add_argument("--allow-nonstandard-blocks", action="store_true",
                       help="permit conventional blocks other than 16x16")

    p = sub.add_parser("encrypt", help="encrypt an RGB image")
    p.add_argument("--in", dest="input")
    p.add_argument("--key", help="master key file (32 raw bytes or 64 hex chars)")
    p.add_argument("--subkeys",
                   help="explicit K1..K4 file (128 raw bytes or 4 hex lines)")
    p.add_argument("--out", help=".png (lossless) or .jpg")
    p.add_argument("--meta", help="sidecar path (default: <out>.meta.json)")
    add_cipher_flags(p, scheme_required=True)
    p.add_argument("--crop-to-blocks", action="store_true",
                   help="crop right/bottom margins to a block multiple first")
    p.add_argument("--quality", type=int, default=95, help="JPEG quality for .jpg output")
    p.add_argument("--subsampling", type=_subsampling, default=Subsampling.S444)
    p.add_argument("--embed-metadata", action="store_true",
                   help="also embed the sidecar JSON as a JPEG comment segment")
    p.set_defaults(func=_cmd_encrypt,
                   required_dests=("input", "out", "scheme"))

    p = sub.add_parser("decrypt", help="decrypt an encrypted image")
    p.add_argument("--in", dest="input")
    p.add_argument("--key", help="master key file (32 raw bytes or 64 hex chars)")
    p.add_argument("--subkeys",
                   help="explicit K1..K4 file (128 raw bytes or 4 hex lines)")
    p.add_argument("--out")
    p.add_argument("--meta", help="sidecar path (default: <in>.meta.json or COM segment)")
    add_cipher_flags(p, scheme_required=False)
    p.add_argument("--quality", type=int, default=95, help="JPEG quality for .jpg output")
    p.add_argument("--subsampling", type=_subsampling, default=Subsampling.S444)
    p.set_defaults(func=_cmd_decrypt, required_dests=("input", "out"))

    p = sub.add_parser("jpeg-roundtrip", help="encode/decode once and report quality")
    p.add_argument("--in", dest="input")
    p.add_argument("--quality", type=int, default=95)
    p.add_argument("--subsampling", type=_subsampling, default=Subsampling.S444)
    p.add_argument("--out", help="optionally keep the encoded stream")
    p.set_defaults(func=_cmd_jpeg_roundtrip, required_dests=("input",))

    p = sub.add_parser("sns-sim", help="run one JPEG through a provider policy")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")
    p.add_argument("--provider", type=_provider)
    p.add_argument("--facebook-qf", type=_facebook_rule,
                   default=const_quality_rule(85), metavar="const:N",
                   help="Facebook recompression quality rule (default const:85)")
    p.add_argument("--allow-downscale", action="store_true",
                   help="bilinear-downscale oversized uploads instead of failing")
    p.set_defaults(func=_cmd_sns_sim, required_dests=("input", "out", "provider"))

    p = sub.add_parser("evaluate", help="PSNR-vs-Qf pipeline over an image corpus")
    p.add_argument("--images", help="glob of RGB input images")
    p.add_argument("--provider", type=_provider)
    p.add_argument("--facebook-qf", type=_facebook_rule,
                   default=const_quality_rule(85), metavar="const:N")
    p.add_argument("--qf-min", type=int, default=70)
    p.add_argument("--qf-max", type=int, default=100)
    p.add_argument("--qf-step", type=int, default=1)
    p.add_argument("--variants", help=f"comma list from {','.join(ALL_VARIANTS)}")
    p.add_argument("--orientation", type=_orientation, default=Orientation.VERTICAL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop-to-blocks", action="store_true")
    p.add_argument("--out-dir")
    p.add_argument("--plot", action="store_true", help="also write an SVG plot")
    p.set_defaults(func=_cmd_evaluate,
                   required_dests=("images", "provider", "out_dir"))

    p = sub.add_parser("attack", help="jigsaw-solver attack protocol over a corpus")
    p.add_argument("--images", required=True)
    p.add_argument("--variants",
                   help="comma list of encrypted variants (default conventional-16,grayscale-8)")
    p.add_argument("--trials", type=int, default=30,
                   help="random keys per image; best assembly is kept")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--search-orientations", action="store_true",
                   help="let the solver search the 8 orientations per piece")
    p.add_argument("--orientation", type=_orientation, default=Orientation.VERTICAL)
    p.add_argument("--crop-to-blocks", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_attack,
                   required_dests=("images", "out_dir"))

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _load_config_defaults(argv, parser)
    args = parser.parse_args(argv)
    for dest in getattr(args, "required_dests", ()):
        if getattr(args, dest, None) is None:
            parser.error(f"--{dest.replace('_', '-')} is required "
                         "(flag or config file)")
    if args.command in ("encrypt", "decrypt") and not (args.key or args.subkeys):
        parser.error("one of --key or --subkeys is required")
    if getattr(args, "trials", 1) < 1:
        parser.error("--trials must be >= 1")
    if getattr(args, "qf_min", 1) > getattr(args, "qf_max", 100):
        parser.error("--qf-min must not exceed --qf-max")
    try:
        return args.func(args)
    except BlockScrambleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
