"""Synchronized dynamic-key schedule, tiered packet protection, stream filter.

Both ends derive the same key chain from a shared secret (a large prime
plus a session salt) without ever exchanging key material: each interval
hashes the current prime into a key whose length itself varies, then walks
to the next prime by a secret-dependent step. Packets are protected
according to their sensitivity tier and the verification filter drops
anything whose integrity tag no longer matches.

The cipher here is a reference construction over SHA-256, not a vetted
AEAD; it exists so tampering is detectable at desk scale.

Wire format of a protected packet (bit-exact across implementations):
tier (1 byte), interval_index (8 bytes big-endian), body length (4 bytes
big-endian), body, tag length (1 byte, 0 or 16), tag.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import struct
from dataclasses import dataclass
from typing import Callable, Iterable

from .msgcore import Sensitivity

KEY_LENGTH_CHOICES = (128, 192, 256)
TAG_BYTES = 16
MIN_SEED_PRIME = 2**31

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_SMALL_PRIMES = (
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139,
    149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211,
)


class NotPrimeError(ValueError):
    """The shared secret's seed is not a prime number."""


class UnknownIntervalError(KeyError):
    """A packet references an interval outside the derivable window."""


@dataclass(frozen=True)
class SharedSecret:
    """Out-of-band secret both ends hold: a seed prime and a 16-byte salt."""

    seed_prime: int
    session_salt: bytes

    def __post_init__(self):
        if len(self.session_salt) != 16:
            raise ValueError("session_salt must be exactly 16 bytes")


@dataclass(frozen=True)
class KeyState:
    """Key material for one interval; a pure function of (secret, index)."""

    interval_index: int
    current_prime: int
    key: bytes
    key_length: int


@dataclass(frozen=True)
class ProtectedPacket:
    tier: Sensitivity
    interval_index: int
    body: bytes
    tag: bytes | None


def is_prime_u64(n: int) -> bool:
    """Deterministic Miller-Rabin for 64-bit integers."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        if a % n == 0:
            continue
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    if n <= 2:
        return 2
    candidate = n | 1
    while not is_prime_u64(candidate):
        candidate += 2
    return candidate


def _material(prime: int, salt: bytes, interval: int) -> bytes:
    return prime.to_bytes(8, "big") + salt + interval.to_bytes(8, "big")


def _derive(prime: int, salt: bytes, interval: int) -> tuple[bytes, int]:
    """Key bytes and bit length for one interval.

    The first byte of the base digest picks the length; the key itself is
    the counter-extended hash of the same material truncated to that
    length.
    """
    material = _material(prime, salt, interval)
    base = hashlib.sha256(material).digest()
    key_length = KEY_LENGTH_CHOICES[base[0] % 3]
    nbytes = key_length // 8
    out = b""
    counter = 0
    while len(out) < nbytes:
        out += hashlib.sha256(material + counter.to_bytes(4, "big")).digest()
        counter += 1
    return out[:nbytes], key_length


def init_key_state(secret: SharedSecret) -> KeyState:
    if not is_prime_u64(secret.seed_prime):
        raise NotPrimeError(f"{secret.seed_prime} is not prime")
    if secret.seed_prime < MIN_SEED_PRIME:
        raise ValueError(f"seed_prime must be >= 2**31, got {secret.seed_prime}")
    key, key_length = _derive(secret.seed_prime, secret.session_salt, 0)
    return KeyState(
        interval_index=0,
        current_prime=secret.seed_prime,
        key=key,
        key_length=key_length,
    )


def advance_key(state: KeyState, secret: SharedSecret) -> KeyState:
    """Next interval's state; both ends compute it without any exchange."""
    step = int.from_bytes(hashlib.sha256(state.key).digest(), "big") % 2**16
    prime = next_prime(state.current_prime + step + 1)
    interval = state.interval_index + 1
    key, key_length = _derive(prime, secret.session_salt, interval)
    return KeyState(
        interval_index=interval,
        current_prime=prime,
        key=key,
        key_length=key_length,
    )


def integrity_tag(key: bytes, data: bytes) -> bytes:
    return hashlib.sha256(key + b"\x01" + data).digest()[:TAG_BYTES]


def keystream(key: bytes, interval: int, length: int) -> bytes:
    out = b""
    block = 0
    while len(out) < length:
        out += hashlib.sha256(
            key + interval.to_bytes(8, "big") + block.to_bytes(8, "big")
        ).digest()
        block += 1
    return out[:length]


def _xor(data: bytes, pad: bytes) -> bytes:
    return bytes(a ^ b for a, b in zip(data, pad))


def protect(plaintext: bytes, tier: Sensitivity, state: KeyState) -> ProtectedPacket:
    """Apply the tier's treatment under the current interval key.

    High sensitive content is encrypted and tagged, low sensitive is
    tagged in the clear, open access passes through untouched.
    """
    if tier is Sensitivity.HIGH_SENSITIVE:
        body = _xor(plaintext, keystream(state.key, state.interval_index, len(plaintext)))
        tag = integrity_tag(state.key, body)
    elif tier is Sensitivity.LOW_SENSITIVE:
        body = bytes(plaintext)
        tag = integrity_tag(state.key, body)
    else:
        body = bytes(plaintext)
        tag = None
    return ProtectedPacket(
        tier=tier, interval_index=state.interval_index, body=body, tag=tag
    )


def verify_packet(packet: ProtectedPacket, state: KeyState) -> bytes | None:
    """Recovered plaintext, or None when the packet fails verification."""
    if packet.tier is Sensitivity.OPEN_ACCESS:
        return packet.body
    if packet.tag is None:
        return None
    expected = integrity_tag(state.key, packet.body)
    if not _hmac.compare_digest(expected, packet.tag):
        return None
    if packet.tier is Sensitivity.HIGH_SENSITIVE:
        return _xor(packet.body, keystream(state.key, packet.interval_index, len(packet.body)))
    return packet.body


def dsm_verify(
    packets: Iterable[ProtectedPacket],
    keychain: Callable[[int], KeyState],
) -> tuple[list[bytes], int]:
    """Filter a packet stream down to verified plaintexts.

    Returns the accepted plaintexts in order plus the count of packets
    dropped for failing their tag. Open access packets always pass.
    """
    accepted: list[bytes] = []
    dropped = 0
    for packet in packets:
        if packet.tier is Sensitivity.OPEN_ACCESS:
            accepted.append(packet.body)
            continue
        state = keychain(packet.interval_index)
        plaintext = verify_packet(packet, state)
        if plaintext is None:
            dropped += 1
        else:
            accepted.append(plaintext)
    return accepted, dropped


class KeyChain:
    """Derives and caches the key for any reachable interval.

    ``behind``/``ahead`` bound how far from the holder's current interval a
    requested index may lie; ``behind=None`` allows arbitrarily old
    intervals (used for verifying bundles that travelled for a while).
    """

    def __init__(
        self,
        secret: SharedSecret,
        behind: int | None = 2,
        ahead: int = 2,
    ) -> None:
        self._secret = secret
        self._behind = behind
        self._ahead = ahead
        self._cache: list[KeyState] = [init_key_state(secret)]
        self._current = 0

    @property
    def current_index(self) -> int:
        return self._current

    @property
    def current_state(self) -> KeyState:
        return self._state_at(self._current)

    def advance(self) -> KeyState:
        self._current += 1
        return self._state_at(self._current)

    def _state_at(self, interval: int) -> KeyState:
        while len(self._cache) <= interval:
            self._cache.append(advance_key(self._cache[-1], self._secret))
        return self._cache[interval]

    def __call__(self, interval: int) -> KeyState:
        if interval < 0 or interval > self._current + self._ahead:
            raise UnknownIntervalError(interval)
        if self._behind is not None and interval < self._current - self._behind:
            raise UnknownIntervalError(interval)
        return self._state_at(interval)


_PACKET_HEADER = struct.Struct(">BQI")


def encode_packet(packet: ProtectedPacket) -> bytes:
    tag = packet.tag or b""
    if len(tag) not in (0, TAG_BYTES):
        raise ValueError("tag must be empty or 16 bytes")
    return (
        _PACKET_HEADER.pack(packet.tier, packet.interval_index, len(packet.body))
        + packet.body
        + bytes([len(tag)])
        + tag
    )


def decode_packet(data: bytes) -> ProtectedPacket:
    if len(data) < _PACKET_HEADER.size + 1:
        raise ValueError("truncated packet")
    tier_raw, interval, body_len = _PACKET_HEADER.unpack_from(data, 0)
    offset = _PACKET_HEADER.size
    body = data[offset : offset + body_len]
    if len(body) != body_len:
        raise ValueError("truncated body")
    offset += body_len
    tag_len = data[offset]
    offset += 1
    if tag_len not in (0, TAG_BYTES):
        raise ValueError(f"bad tag length {tag_len}")
    tag = data[offset : offset + tag_len]
    if len(tag) != tag_len or offset + tag_len != len(data):
        raise ValueError("bad packet length")
    return ProtectedPacket(
        tier=Sensitivity(tier_raw),
        interval_index=interval,
        body=body,
        tag=tag if tag_len else None,
    )
