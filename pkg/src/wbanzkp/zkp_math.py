"""Group arithmetic, bit-interval extraction and the XOR stream cipher.

Everything here is a pure function over small immutable values. The
weaknesses of the construction (cyclic key reuse, no MAC) are intentional:
the adversary harness depends on them.
"""
from __future__ import annotations

import configparser
import functools
import random
from dataclasses import dataclass
from pathlib import Path

import gmpy2

# RFC 3526 group 14 (2048-bit MODP) prime.
MODP_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)

# Smallest prime above 2**1095 + 0x5A5A5A5A: a 1096-bit modulus whose
# elements are exactly as wide as the minimal secret representation.
COMPACT_1096 = 2**1095 + 0x5A5A5F2B


@functools.lru_cache(maxsize=64)
def _is_probable_prime(n: int) -> bool:
    return bool(gmpy2.is_prime(n, 40))


class ZkpError(ValueError):
    pass


class DegenerateBase(ZkpError):
    pass


class DegenerateExponent(ZkpError):
    pass


class PointerOutOfRange(ZkpError):
    pass


class EmptyKey(ZkpError):
    pass


@dataclass(frozen=True)
class GroupParams:
    modulus: int = MODP_2048
    min_secret_bits: int = 1096
    interval_bits: int = 200
    data_key_bits: int = 128
    nonce_bits: int = 256

    def __post_init__(self):
        if self.modulus < 3 or not _is_probable_prime(self.modulus):
            raise ZkpError("modulus must be prime")
        if self.modulus.bit_length() < self.min_secret_bits:
            raise ZkpError(
                f"modulus has {self.modulus.bit_length()} bits, "
                f"need at least {self.min_secret_bits}"
            )
        if not 0 < self.interval_bits <= self.min_secret_bits:
            raise ZkpError("interval_bits must be in (0, min_secret_bits]")
        if not 0 < self.data_key_bits <= self.min_secret_bits:
            raise ZkpError("data_key_bits must be in (0, min_secret_bits]")
        if self.nonce_bits < 2:
            raise ZkpError("nonce_bits must be at least 2")

    @classmethod
    def compact(cls) -> "GroupParams":
        """1096-bit group used by the simulator (paper-sized frames)."""
        return _compact()

    @property
    def element_bytes(self) -> int:
        return (self.modulus.bit_length() + 7) // 8

    @property
    def interval_bytes(self) -> int:
        return (self.interval_bits + 7) // 8

    @classmethod
    def from_config(cls, source: str | Path) -> "GroupParams":
        """Load from ``key = value`` text; the modulus may be decimal or 0x-hex.

        ``source`` is either a path to an existing file or the config text.
        Missing keys keep their compiled-in defaults.
        """
        text = source
        if isinstance(source, Path) or (
            "\n" not in str(source) and "=" not in str(source) and Path(source).exists()
        ):
            text = Path(source).read_text()
        parser = configparser.ConfigParser()
        body = str(text)
        if not body.lstrip().startswith("["):
            body = "[group]\n" + body
        parser.read_string(body)
        section = parser[parser.sections()[0]]
        kwargs = {}
        for key in ("modulus", "min_secret_bits", "interval_bits", "data_key_bits", "nonce_bits"):
            if key in section:
                kwargs[key] = int(section[key].replace("_", "").strip(), 0)
        return cls(**kwargs)


@functools.lru_cache(maxsize=None)
def _compact() -> GroupParams:
    return GroupParams(modulus=COMPACT_1096)


@dataclass(frozen=True)
class GroupElement:
    value: int


@dataclass(frozen=True)
class Nonce:
    value: int


@dataclass(frozen=True)
class IntervalPointer:
    start_bit: int


@dataclass(frozen=True)
class SymmetricKey:
    bits: str

    def __post_init__(self):
        if not self.bits:
            raise EmptyKey("symmetric key must have at least one bit")
        if set(self.bits) - {"0", "1"}:
            raise ZkpError("key bits must be a string of 0/1 characters")

    def __len__(self):
        return len(self.bits)

    def to_bytes(self) -> bytes:
        return bits_to_bytes(self.bits)

    @classmethod
    def from_bytes(cls, raw: bytes, nbits: int | None = None) -> "SymmetricKey":
        bits = bytes_to_bits(raw)
        return cls(bits if nbits is None else bits[:nbits])

    def as_pointer(self, params: GroupParams) -> IntervalPointer:
        """Read the key as an unsigned integer and reduce it to a bit offset."""
        return IntervalPointer(int(self.bits, 2) % params.min_secret_bits)


def bits_to_bytes(bits: str) -> bytes:
    """MSB-first packing; a trailing partial byte is zero-padded on the right."""
    pad = (-len(bits)) % 8
    padded = bits + "0" * pad
    return int(padded, 2).to_bytes(len(padded) // 8, "big") if padded else b""


def bytes_to_bits(raw: bytes) -> str:
    return "".join(f"{b:08b}" for b in raw)


def element_to_bytes(element: GroupElement, params: GroupParams) -> bytes:
    return element.value.to_bytes(params.element_bytes, "big")


def element_from_bytes(raw: bytes, params: GroupParams) -> GroupElement:
    return GroupElement(int.from_bytes(raw, "big"))


def render_bits(element: GroupElement, params: GroupParams) -> str:
    """Fixed-width MSB-first rendering over ``min_secret_bits`` bits.

    Values wider than the rendering keep their low-order bits.
    """
    width = params.min_secret_bits
    return format(element.value & ((1 << width) - 1), f"0{width}b")


def pow_secret(base: GroupElement, exponent: Nonce, params: GroupParams) -> GroupElement:
    if base.value < 2:
        raise DegenerateBase(f"base {base.value} is degenerate")
    if exponent.value < 2:
        raise DegenerateExponent(f"exponent {exponent.value} is degenerate")
    if base.value >= params.modulus:
        raise ZkpError("base is not reduced modulo the group prime")
    return GroupElement(int(gmpy2.powmod(base.value, exponent.value, params.modulus)))


def extract_interval(
    secret: GroupElement, start: IntervalPointer, length_bits: int, params: GroupParams
) -> str:
    """Read ``length_bits`` bits from the rendering, wrapping past the end."""
    width = params.min_secret_bits
    if not 0 <= start.start_bit < width:
        raise PointerOutOfRange(f"start bit {start.start_bit} outside [0, {width})")
    if not 0 < length_bits <= width:
        raise ZkpError(f"interval length {length_bits} outside (0, {width}]")
    bits = render_bits(secret, params)
    end = start.start_bit + length_bits
    if end <= width:
        return bits[start.start_bit:end]
    return bits[start.start_bit:] + bits[: end - width]


def derive_data_key(secret: GroupElement, pointer: IntervalPointer, params: GroupParams) -> SymmetricKey:
    return SymmetricKey(extract_interval(secret, pointer, params.data_key_bits, params))


def keystream(key: SymmetricKey, nbytes: int) -> bytes:
    """The key's bits repeated cyclically out to ``nbytes`` bytes."""
    if nbytes == 0:
        return b""
    if len(key.bits) % 8 == 0:
        raw = key.to_bytes()
        reps = -(-nbytes // len(raw))
        return (raw * reps)[:nbytes]
    nbits = 8 * nbytes
    reps = -(-nbits // len(key.bits))
    return bits_to_bytes((key.bits * reps)[:nbits])


def xor_bytes(a: bytes, b: bytes) -> bytes:
    n = min(len(a), len(b))
    return (int.from_bytes(a[:n], "big") ^ int.from_bytes(b[:n], "big")).to_bytes(n, "big")


def stream_encrypt(key: SymmetricKey, plaintext: bytes) -> bytes:
    if not isinstance(key, SymmetricKey) or not key.bits:
        raise EmptyKey("stream cipher needs a non-empty key")
    return xor_bytes(plaintext, keystream(key, len(plaintext)))


stream_decrypt = stream_encrypt


def make_rng(seed, stream=None) -> random.Random:
    """Deterministic per-stream generator; ``stream`` names e.g. a node."""
    return random.Random(f"{seed}/{stream}" if stream is not None else seed)


def random_nonce(rng: random.Random, params: GroupParams | None = None) -> Nonce:
    bits = params.nonce_bits if params is not None else 256
    return Nonce(rng.randrange(2, 1 << bits))


def random_pointer(rng: random.Random, params: GroupParams) -> IntervalPointer:
    return IntervalPointer(rng.randrange(params.min_secret_bits))


def random_key(rng: random.Random, nbits: int) -> SymmetricKey:
    return SymmetricKey(format(rng.getrandbits(nbits), f"0{nbits}b"))


def random_element(rng: random.Random, params: GroupParams) -> GroupElement:
    return GroupElement(rng.randrange(2, params.modulus - 1))
