"""Deterministic derivation of all per-block encryption decisions.

Every random decision is drawn from a ChaCha20 keystream under a 256-bit
subkey, with rejection sampling for exact uniformity, so the whole transform
is a portable pure function of (key material, block count): identical on
every platform, bit for bit.

Subkeys are derived from one 32-byte master secret with HMAC-SHA256 under
domain-separation tags that include the scheme identifier, so the same
master yields unrelated streams for the conventional and grayscale schemes.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .core import GeometryError, KeyFormatError, Scheme

KEY_BYTES = 32
KEYSTREAM_ALGORITHM_ID = "chacha20"
_DOMAIN = b"blockscramble.v1"
_CHACHA_BLOCK = 64


class Purpose(enum.Enum):
    """Which per-block decision a keystream feeds; separates the four streams."""

    PERMUTE = "permute"
    ROTATE_INVERT = "rotate-invert"
    NEG_POS = "neg-pos"
    COLOR_SHUFFLE = "color-shuffle"


def _check_key(key: bytes, what: str = "key") -> bytes:
    if not isinstance(key, (bytes, bytearray)):
        raise KeyFormatError(f"{what} must be bytes, got {type(key).__name__}")
    if len(key) != KEY_BYTES:
        raise KeyFormatError(f"{what} must be {KEY_BYTES} bytes, got {len(key)}")
    return bytes(key)


@dataclass(frozen=True)
class KeySet:
    """Master secret plus the four derived subkeys, bound to a scheme.

    k4 is always present but goes unused under the grayscale scheme, which
    has no color-shuffle step.
    """

    master: bytes | None
    scheme: Scheme
    k1: bytes
    k2: bytes
    k3: bytes
    k4: bytes

    def __post_init__(self):
        if self.master is not None:
            _check_key(self.master, "master")
        for name in ("k1", "k2", "k3", "k4"):
            _check_key(getattr(self, name), name)

    @property
    def subkeys(self) -> tuple[bytes, bytes, bytes, bytes]:
        return (self.k1, self.k2, self.k3, self.k4)

    @classmethod
    def from_subkeys(cls, scheme: Scheme, k1: bytes, k2: bytes, k3: bytes, k4: bytes) -> "KeySet":
        """Build from four explicit subkeys instead of one master."""
        return cls(None, scheme, k1, k2, k3, k4)


def derive_subkeys(master: bytes, scheme: Scheme) -> KeySet:
    """Derive K1..K4 from a 32-byte master via HMAC-SHA256 with tags K1..K4."""
    master = _check_key(master, "master")
    tags = (b"K1", b"K2", b"K3", b"K4")
    ks = [
        hmac.new(master, _DOMAIN + b"/" + scheme.value.encode() + b"/" + t,
                 hashlib.sha256).digest()
        for t in tags
    ]
    return KeySet(master, scheme, *ks)


def _nonce(purpose: Purpose) -> bytes:
    # 16-byte ChaCha20 nonce: 8-byte little-endian block counter (zero) plus
    # an 8-byte purpose tag, so the four decision streams never overlap.
    return b"\x00" * 8 + hashlib.sha256(_DOMAIN + b"/" + purpose.value.encode()).digest()[:8]


@dataclass(frozen=True)
class KeystreamContext:
    """Position in one decision stream: (subkey, purpose, byte counter)."""

    subkey: bytes
    purpose: Purpose
    counter: int = 0

    def __post_init__(self):
        _check_key(self.subkey, "subkey")
        if self.counter < 0:
            raise ValueError("counter must be >= 0")


def keystream_bytes(ctx: KeystreamContext, length: int) -> bytes:
    """Keystream slice [counter, counter+length); pure in the context fields."""
    block, offset = divmod(ctx.counter, _CHACHA_BLOCK)
    nonce = block.to_bytes(8, "little") + _nonce(ctx.purpose)[8:]
    enc = Cipher(algorithms.ChaCha20(ctx.subkey, nonce), mode=None).encryptor()
    raw = enc.update(bytes(offset + length))
    return raw[offset:]


class _Reader:
    """Buffered sequential reader over one purpose-tagged keystream."""

    def __init__(self, subkey: bytes, purpose: Purpose):
        _check_key(subkey, "subkey")
        self._enc = Cipher(
            algorithms.ChaCha20(subkey, _nonce(purpose)), mode=None
        ).encryptor()
        self._buf = b""
        self._pos = 0
        self.counter = 0

    def read(self, k: int) -> bytes:
        while len(self._buf) - self._pos < k:
            self._buf = self._buf[self._pos:] + self._enc.update(bytes(4096))
            self._pos = 0
        out = self._buf[self._pos:self._pos + k]
        self._pos += k
        self.counter += k
        return out

    def uniform(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection sampling (no modulo bias)."""
        if bound < 1:
            raise ValueError("bound must be >= 1")
        if bound == 1:
            return 0
        k = 1
        while (1 << (8 * k)) < bound:
            k += 1
        space = 1 << (8 * k)
        limit = (space // bound) * bound
        while True:
            v = int.from_bytes(self.read(k), "big")
            if v < limit:
                return v % bound


def _check_n(n: int) -> int:
    if not isinstance(n, int) or n < 1:
        raise GeometryError(f"block count must be >= 1, got {n!r}")
    return n


def gen_permutation(k1: bytes, n: int) -> np.ndarray:
    """Keyed uniform permutation of [0, n): Fisher-Yates, high index down."""
    _check_n(n)
    r = _Reader(k1, Purpose.PERMUTE)
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = r.uniform(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _byte_draws(reader: _Reader, n: int, bound: int) -> np.ndarray:
    # Sequential single-byte rejection draws, vectorized chunk by chunk.
    # Yields the same value sequence as n calls to reader.uniform(bound),
    # so outputs are prefix-stable in n.
    assert 2 <= bound <= 256
    limit = (256 // bound) * bound
    out = np.empty(n, dtype=np.uint8)
    got = 0
    while got < n:
        chunk = np.frombuffer(reader.read(max(64, n - got)), dtype=np.uint8)
        accepted = chunk[chunk < limit] % bound
        take = min(len(accepted), n - got)
        out[got:got + take] = accepted[:take]
        got += take
    return out


def gen_d4_codes(k2: bytes, n: int) -> np.ndarray:
    """n uniform draws from the 8 dihedral transform codes, in [0, 8)."""
    _check_n(n)
    return _byte_draws(_Reader(k2, Purpose.ROTATE_INVERT), n, 8)


def gen_neg_flags(k3: bytes, n: int) -> np.ndarray:
    """n uniform bits controlling the negative-positive transform."""
    _check_n(n)
    return _byte_draws(_Reader(k3, Purpose.NEG_POS), n, 2)


def gen_color_perms(k4: bytes, n: int) -> np.ndarray:
    """n uniform draws over the 6 channel permutations, in [0, 6).

    Index 0 is the identity ordering (R, G, B); indices follow lexicographic
    order of the permutations.
    """
    _check_n(n)
    return _byte_draws(_Reader(k4, Purpose.COLOR_SHUFFLE), n, 6)


def generate_master_key() -> bytes:
    """Fresh 32-byte master secret from the OS CSPRNG."""
    import secrets

    return secrets.token_bytes(KEY_BYTES)


def parse_key_material(data: bytes) -> bytes:
    """Accept a key file's content: 32 raw bytes, or 64 hex chars (+newline)."""
    if len(data) == KEY_BYTES:
        return bytes(data)
    text = data.decode("ascii", errors="replace").strip()
    if len(text) == 2 * KEY_BYTES:
        try:
            return bytes.fromhex(text)
        except ValueError:
            pass
    raise KeyFormatError(
        f"key file must hold {KEY_BYTES} raw bytes or {2 * KEY_BYTES} hex characters"
    )


def read_key_file(path) -> bytes:
    with open(path, "rb") as fh:
        return parse_key_material(fh.read())


def parse_subkey_material(data: bytes) -> tuple[bytes, bytes, bytes, bytes]:
    """Four explicit subkeys: 128 raw bytes, or four 64-hex-char lines."""
    if len(data) == 4 * KEY_BYTES:
        return tuple(data[i * KEY_BYTES:(i + 1) * KEY_BYTES] for i in range(4))
    lines = [ln.strip() for ln in data.decode("ascii", errors="replace").splitlines()
             if ln.strip()]
    if len(lines) == 4 and all(len(ln) == 2 * KEY_BYTES for ln in lines):
        try:
            return tuple(bytes.fromhex(ln) for ln in lines)
        except ValueError:
            pass
    raise KeyFormatError(
        f"subkey file must hold {4 * KEY_BYTES} raw bytes or four "
        f"{2 * KEY_BYTES}-hex-char lines (K1..K4)"
    )


def read_subkey_file(path) -> tuple[bytes, bytes, bytes, bytes]:
    with open(path, "rb") as fh:
        return parse_subkey_material(fh.read())


def write_key_file(path, master: bytes, hex_encoding: bool = False) -> None:
    _check_key(master, "master")
    with open(path, "wb") as fh:
        fh.write(master.hex().encode() + b"\n" if hex_encoding else master)
