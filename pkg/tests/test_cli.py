import csv
import json
import os

import numpy as np
import pytest

from blockscramble import RasterImage, decode_jpeg, parse_jpeg_info
from blockscramble.cli import main
from blockscramble.codec import load_image, save_image
from blockscramble.corpus import synthetic_image
from blockscramble.experiments import (
    ATTACK_HEADER,
    EVAL_DETAIL_HEADER,
    EVAL_SUMMARY_HEADER,
)


@pytest.fixture()
def workdir(tmp_path):
    img = synthetic_image(64, 48, seed=60)
    save_image(tmp_path / "plain.png", img)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


class TestKeygen:
    def test_raw_key_file(self, tmp_path, capsys):
        path = tmp_path / "key.bin"
        assert run("keygen", "--out", path) == 0
        assert len(path.read_bytes()) == 32

    def test_hex_key_file(self, tmp_path):
        path = tmp_path / "key.hex"
        assert run("keygen", "--out", path, "--hex") == 0
        data = path.read_bytes()
        assert len(data) == 65 and data.endswith(b"\n")
        bytes.fromhex(data.decode().strip())

    def test_two_keys_differ(self, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        run("keygen", "--out", a)
        run("keygen", "--out", b)
        assert a.read_bytes() != b.read_bytes()


class TestEncryptDecrypt:
    def test_png_round_trip_conventional(self, workdir, capsys):
        key = workdir / "key.bin"
        run("keygen", "--out", key)
        assert run("encrypt", "--in", workdir / "plain.png", "--key", key,
                   "--scheme", "conventional", "--out", workdir / "enc.png") == 0
        assert (workdir / "enc.png.meta.json").exists()
        assert run("decrypt", "--in", workdir / "enc.png", "--key", key,
                   "--out", workdir / "dec.png") == 0
        assert load_image(workdir / "dec.png") == load_image(workdir / "plain.png")

    def test_png_round_trip_grayscale(self, workdir):
        key = workdir / "key.bin"
        run("keygen", "--out", key)
        assert run("encrypt", "--in", workdir / "plain.png", "--key", key,
                   "--scheme", "grayscale", "--out", workdir / "enc.png") == 0
        enc = load_image(workdir / "enc.png")
        assert (enc.width, enc.height, enc.channels) == (64, 144, 1)
        run("decrypt", "--in", workdir / "enc.png", "--key", key,
            "--out", workdir / "dec.png")
        assert load_image(workdir / "dec.png") == load_image(workdir / "plain.png")

    def test_decrypt_with_flags_instead_of_sidecar(self, workdir):
        key = workdir / "key.bin"
        run("keygen", "--out", key)
        run("encrypt", "--in", workdir / "plain.png", "--key", key,
            "--scheme", "conventional", "--out", workdir / "enc.png")
        os.unlink(workdir / "enc.png.meta.json")
        assert run("decrypt", "--in", workdir / "enc.png", "--key", key,
                   "--scheme", "conventional", "--out", workdir / "dec.png") == 0
        assert load_image(workdir / "dec.png") == load_image(workdir / "plain.png")

    def test_decrypt_without_sidecar_or_flags_fails(self, workdir, capsys):
        key = workdir / "key.bin"
        run("keygen", "--out", key)
        run("encrypt", "--in", workdir / "plain.png", "--key", key,
            "--scheme", "conventional", "--out", workdir / "enc.png")
        os.unlink(workdir / "enc.png.meta.json")
        assert run("decrypt", "--in", workdir / "enc.png", "--key", key,
                   "--out", workdir / "dec.png") == 2
        assert "metadata" in capsys.readouterr().err

    def test_embedded_jpeg_metadata(self, workdir):
        key = workdir / "key.bin"
        run("keygen", "--out", key)
        assert run("encrypt", "--in", workdir / "plain.png", "--key", key,
                   "--scheme", "grayscale", "--out", workdir / "enc.jpg",
                   "--quality", "100", "--embed-metadata") == 0
        with open(workdir / "enc.jpg", "rb") as fh:
            info = parse_jpeg_info(fh.read())
        assert any(b"grayscale" in c for c in info.comments)
        os.unlink(workdir / "enc.jpg.meta.json")
        assert run("decrypt", "--in", workdir / "enc.jpg", "--key", key,
                   "--out", workdir / "dec.png") == 0
        from blockscramble import psnr

        # decryption inverts the scramble around JPEG loss
        assert psnr(load_image(workdir / "dec.png"),
                    load_image(workdir / "plain.png")) > 40

    def test_crop_flag_handles_non_divisible(self, tmp_path):
        img = synthetic_image(70, 50, seed=61)
        save_image(tmp_path / "odd.png", img)
        key = tmp_path / "key.bin"
        run("keygen", "--out", key)
        assert run("encrypt", "--in", tmp_path / "odd.png", "--key", key,
                   "--scheme", "conventional", "--out", tmp_path / "enc.png") == 2
        assert run("encrypt", "--in", tmp_path / "odd.png", "--key", key,
                   "--scheme", "conventional", "--crop-to-blocks",
                   "--out", tmp_path / "enc.png") == 0
        enc = load_image(tmp_path / "enc.png")
        assert (enc.width, enc.height) == (64, 48)


class TestJpegRoundtrip:
    def test_reports_quality(self, workdir, capsys):
        assert run("jpeg-roundtrip", "--in", workdir / "plain.png",
                   "--quality", "85", "--subsampling", "420") == 0
        out = capsys.readouterr().out
        assert "estimated_qf=85" in out and "4:2:0" in out


class TestSnsSim:
    def test_twitter_passthrough(self, workdir, capsys):
        run("jpeg-roundtrip", "--in", workdir / "plain.png", "--quality", "80",
            "--subsampling", "420", "--out", workdir / "up.jpg")
        capsys.readouterr()
        assert run("sns-sim", "--in", workdir / "up.jpg", "--provider", "twitter",
                   "--out", workdir / "down.jpg") == 0
        decision = json.loads(capsys.readouterr().out)
        assert decision["recompressed"] is False
        assert decision["passthrough_identical"] is True
        assert (workdir / "down.jpg").read_bytes() == (workdir / "up.jpg").read_bytes()

    def test_facebook_recompress(self, workdir, capsys):
        run("jpeg-roundtrip", "--in", workdir / "plain.png", "--quality", "80",
            "--out", workdir / "up.jpg")
        capsys.readouterr()
        assert run("sns-sim", "--in", workdir / "up.jpg", "--provider", "facebook-hq",
                   "--facebook-qf", "const:71", "--out", workdir / "down.jpg") == 0
        decision = json.loads(capsys.readouterr().out)
        assert decision == {
            "provider": "facebook-hq", "recompressed": True, "output_quality": 71,
            "output_subsampling": "4:2:0", "resized": False,
            "passthrough_identical": False,
        }


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        return header, list(reader)


class TestEvaluate:
    def test_small_run_csv_shape(self, tmp_path, capsys):
        for i in range(2):
            save_image(tmp_path / f"img{i}.png", synthetic_image(64, 48, seed=70 + i))
        out = tmp_path / "out"
        assert run("evaluate", "--images", tmp_path / "img*.png",
                   "--provider", "twitter", "--qf-min", "80", "--qf-max", "90",
                   "--qf-step", "10", "--out-dir", out) == 0
        header, rows = read_csv(out / "evaluate_twitter_detail.csv")
        assert header == EVAL_DETAIL_HEADER  # golden schema
        assert len(rows) == 2 * 2 * 4  # images x qf values x variants
        header, rows = read_csv(out / "evaluate_twitter_summary.csv")
        assert header == EVAL_SUMMARY_HEADER
        assert len(rows) == 2 * 4

    def test_deterministic_given_seed(self, tmp_path, capsys):
        save_image(tmp_path / "img.png", synthetic_image(64, 48, seed=72))
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run("evaluate", "--images", tmp_path / "img.png", "--provider",
                "facebook-lq", "--qf-min", "85", "--qf-max", "85", "--seed", "5",
                "--variants", "unencrypted,grayscale-8", "--out-dir", out)
        assert (a / "evaluate_facebook-lq_detail.csv").read_bytes() == \
               (b / "evaluate_facebook-lq_detail.csv").read_bytes()

    def test_unknown_variant_rejected(self, tmp_path, capsys):
        save_image(tmp_path / "img.png", synthetic_image(64, 48, seed=73))
        assert run("evaluate", "--images", tmp_path / "img.png", "--provider",
                   "twitter", "--variants", "rot13", "--out-dir", tmp_path) == 2


class TestAttackCommand:
    def test_small_run(self, tmp_path, capsys):
        save_image(tmp_path / "img.png", synthetic_image(64, 48, seed=74))
        out = tmp_path / "out"
        assert run("attack", "--images", tmp_path / "img.png", "--trials", "2",
                   "--seed", "1", "--out-dir", out) == 0
        header, rows = read_csv(out / "attack_results.csv")
        assert header == ATTACK_HEADER
        # 1 image + 1 mean row, for each of 2 variants
        assert len(rows) == 4
        by_scheme = {(r[1], r[0]): r for r in rows}
        conv = by_scheme[("conventional-16", "img")]
        gray = by_scheme[("grayscale-8", "img")]
        assert int(conv[3]) == (64 // 16) * (48 // 16)  # n = 12
        assert int(gray[3]) == (64 // 8) * (144 // 8)   # composite n = 144
        assert conv[8] == gray[8] == "2"  # trial_count


class TestConfigAndExitCodes:
    def test_usage_error_is_exit_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("keygen")  # missing --out
        assert exc.value.code == 1

    def test_unknown_command_is_exit_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 1

    def test_data_error_is_exit_2(self, tmp_path, capsys):
        assert run("decrypt", "--in", tmp_path / "missing.png",
                   "--key", tmp_path / "nokey", "--out", tmp_path / "x.png") == 2

    def test_config_file_defaults_and_flag_precedence(self, tmp_path, capsys):
        save_image(tmp_path / "img.png", synthetic_image(64, 48, seed=75))
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "images": str(tmp_path / "img.png"),
            "provider": "twitter",
            "qf-min": 85, "qf-max": 85,
            "variants": "unencrypted",
            "out-dir": str(tmp_path / "from_config"),
        }))
        assert run("--config", cfg, "evaluate") == 0
        assert (tmp_path / "from_config" / "evaluate_twitter_detail.csv").exists()
        # explicit flag beats the config value
        assert run("--config", cfg, "evaluate", "--out-dir", tmp_path / "flag_wins") == 0
        assert (tmp_path / "flag_wins" / "evaluate_twitter_detail.csv").exists()


class TestExplicitSubkeys:
    def test_subkey_file_round_trip(self, workdir):
        from blockscramble import Scheme, derive_subkeys

        master = bytes(range(32))
        keys = derive_subkeys(master, Scheme.CONVENTIONAL)
        subkeys = workdir / "subkeys.hex"
        subkeys.write_text("".join(k.hex() + "\n" for k in keys.subkeys))
        key = workdir / "key.bin"
        key.write_bytes(master)
        # encrypt with the derived master, decrypt with the explicit subkeys
        assert run("encrypt", "--in", workdir / "plain.png", "--key", key,
                   "--scheme", "conventional", "--out", workdir / "enc.png") == 0
        assert run("decrypt", "--in", workdir / "enc.png", "--subkeys", subkeys,
                   "--out", workdir / "dec.png") == 0
        assert load_image(workdir / "dec.png") == load_image(workdir / "plain.png")

    def test_key_or_subkeys_required(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            run("encrypt", "--in", workdir / "plain.png",
                "--scheme", "conventional", "--out", workdir / "enc.png")
        assert exc.value.code == 1
        assert "--key or --subkeys" in capsys.readouterr().err
