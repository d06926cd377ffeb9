"""Key schedule, tiered protection and stream filtering.

The expected values here were computed with the straight-line oracle
functions below (trial-division prime walk, direct hash KDF) and frozen;
the oracle code shares nothing with the implementation.
"""

import hashlib
import random

import pytest

from mulenet.msgcore import Sensitivity
from mulenet.secstream import (
    KeyChain,
    NotPrimeError,
    ProtectedPacket,
    SharedSecret,
    UnknownIntervalError,
    advance_key,
    decode_packet,
    dsm_verify,
    encode_packet,
    init_key_state,
    integrity_tag,
    is_prime_u64,
    next_prime,
    protect,
    verify_packet,
)

from helpers import TEST_PRIME, TEST_SALT, make_keychain, shared_test_secret


# --- independent straight-line oracle ----------------------------------------


def oracle_is_prime(n):
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def oracle_next_prime(n):
    c = n
    while not oracle_is_prime(c):
        c += 1
    return c


def oracle_key(prime, salt, interval):
    material = prime.to_bytes(8, "big") + salt + interval.to_bytes(8, "big")
    base = hashlib.sha256(material).digest()
    klen = (128, 192, 256)[base[0] % 3]
    out = b""
    counter = 0
    while len(out) < klen // 8:
        out += hashlib.sha256(material + counter.to_bytes(4, "big")).digest()
        counter += 1
    return klen, out[: klen // 8]


def oracle_chain(secret, steps):
    prime = secret.seed_prime
    states = []
    for i in range(steps + 1):
        klen, key = oracle_key(prime, secret.session_salt, i)
        states.append((i, prime, klen, key))
        step = int.from_bytes(hashlib.sha256(key).digest(), "big") % 2**16
        prime = oracle_next_prime(prime + step + 1)
    return states


# frozen oracle outputs for SharedSecret(2147483659, 000102...0f)
FROZEN_PRIMES = [2147483659, 2147540371, 2147581663, 2147636489, 2147638021, 2147651761]
FROZEN_KEY_0 = "33ba65dddd267cf781fdd70ef07242eba2264ffa3e32fd3eab242c7b611d972e"
FROZEN_KEY_5 = "35fe2a2c53061e107da800271b4ccbc7bc5a799487ccd2fe"
FROZEN_LOW_TAG = "96e579e8d377b3b4102c72a7e7c73ab3"
FROZEN_LOW_WIRE = "010000000000000000000000036162631096e579e8d377b3b4102c72a7e7c73ab3"
FROZEN_HIGH_BODY = "c62304"
FROZEN_HIGH_TAG = "d3a2b0d52b58432bddb6c76f78b0869a"


def chain_states(secret, steps):
    states = [init_key_state(secret)]
    for _ in range(steps):
        states.append(advance_key(states[-1], secret))
    return states


def test_seed_prime_is_first_prime_above_2_31():
    assert oracle_next_prime(2**31) == TEST_PRIME
    assert next_prime(2**31) == TEST_PRIME


def test_primality_agrees_with_trial_division():
    rng = random.Random(3)
    for _ in range(300):
        n = rng.randrange(2, 10**6)
        assert is_prime_u64(n) == oracle_is_prime(n)
    for n in (0, 1, 2, 3, 4, 2**31, TEST_PRIME):
        assert is_prime_u64(n) == oracle_is_prime(n)


def test_init_key_state_matches_independent_kdf():
    state = init_key_state(shared_test_secret())
    klen, key = oracle_key(TEST_PRIME, TEST_SALT, 0)
    assert state.interval_index == 0
    assert state.current_prime == TEST_PRIME
    assert state.key_length == klen
    assert state.key == key
    assert state.key.hex() == FROZEN_KEY_0


def test_init_rejects_composite_seed():
    with pytest.raises(NotPrimeError):
        init_key_state(SharedSecret(4, TEST_SALT))


def test_init_rejects_small_prime():
    with pytest.raises(ValueError):
        init_key_state(SharedSecret(101, TEST_SALT))


def test_same_secret_same_state_on_independent_instances():
    assert init_key_state(shared_test_secret()) == init_key_state(shared_test_secret())


def test_prime_walk_matches_trial_division_oracle():
    secret = shared_test_secret()
    states = chain_states(secret, 5)
    expected = oracle_chain(secret, 5)
    for state, (i, prime, klen, key) in zip(states, expected):
        assert state.interval_index == i
        assert state.current_prime == prime
        assert state.key_length == klen
        assert state.key == key
    assert [s.current_prime for s in states] == FROZEN_PRIMES
    assert states[5].key.hex() == FROZEN_KEY_5


def test_advance_is_deterministic_across_instances():
    secret = shared_test_secret()
    a = chain_states(secret, 2)[-1]
    b = chain_states(secret, 2)[-1]
    assert a == b


def test_key_lengths_stay_in_codomain():
    secret = shared_test_secret()
    state = init_key_state(secret)
    seen = set()
    for _ in range(2000):
        assert state.key_length in (128, 192, 256)
        assert len(state.key) == state.key_length // 8
        seen.add(state.key_length)
        state = advance_key(state, secret)
    assert seen == {128, 192, 256}


def test_protect_open_access_passthrough():
    state = init_key_state(shared_test_secret())
    packet = protect(b"abc", Sensitivity.OPEN_ACCESS, state)
    assert packet.body == b"abc"
    assert packet.tag is None
    accepted, dropped = dsm_verify([packet], make_keychain())
    assert (accepted, dropped) == ([b"abc"], 0)


def test_protect_low_sensitive_tag_is_keyed_hash_of_body():
    state = init_key_state(shared_test_secret())
    packet = protect(b"abc", Sensitivity.LOW_SENSITIVE, state)
    assert packet.body == b"abc"
    expected = hashlib.sha256(state.key + b"\x01" + b"abc").digest()[:16]
    assert packet.tag == expected
    assert packet.tag.hex() == FROZEN_LOW_TAG


def test_protect_high_sensitive_round_trip_and_frozen_ciphertext():
    state = init_key_state(shared_test_secret())
    packet = protect(b"abc", Sensitivity.HIGH_SENSITIVE, state)
    assert packet.body != b"abc"
    assert packet.body.hex() == FROZEN_HIGH_BODY
    assert packet.tag.hex() == FROZEN_HIGH_TAG
    assert verify_packet(packet, state) == b"abc"


def test_round_trip_every_tier_up_to_64k():
    secret = shared_test_secret()
    state = chain_states(secret, 3)[-1]
    keychain = make_keychain()
    for _ in range(3):
        keychain.advance()
    rng = random.Random(11)
    payloads = [b"", b"a", rng.randbytes(257), rng.randbytes(64 * 1024)]
    for payload in payloads:
        for tier in Sensitivity:
            packet = protect(payload, tier, state)
            accepted, dropped = dsm_verify([packet], keychain)
            assert dropped == 0
            assert accepted == [payload]


def test_dsm_verify_filters_tampered_packets():
    state = init_key_state(shared_test_secret())
    keychain = make_keychain()
    packets = [protect(f"p{i}".encode(), Sensitivity.LOW_SENSITIVE, state) for i in range(3)]
    accepted, dropped = dsm_verify(packets, keychain)
    assert (len(accepted), dropped) == (3, 0)

    bad = ProtectedPacket(
        tier=packets[1].tier,
        interval_index=packets[1].interval_index,
        body=b"P1",
        tag=packets[1].tag,
    )
    accepted, dropped = dsm_verify([packets[0], bad, packets[2]], keychain)
    assert (len(accepted), dropped) == (2, 1)
    assert accepted == [b"p0", b"p2"]


def test_exhaustive_single_byte_tampering_always_drops():
    state = init_key_state(shared_test_secret())
    keychain = make_keychain()
    packet = protect(b"water level 4.2m", Sensitivity.LOW_SENSITIVE, state)
    body, tag = bytearray(packet.body), bytearray(packet.tag)
    total = 0
    for region, data in (("body", body), ("tag", tag)):
        for i in range(len(data)):
            corrupted = bytearray(data)
            corrupted[i] ^= 0xFF
            if region == "body":
                mutant = ProtectedPacket(packet.tier, packet.interval_index, bytes(corrupted), packet.tag)
            else:
                mutant = ProtectedPacket(packet.tier, packet.interval_index, packet.body, bytes(corrupted))
            accepted, dropped = dsm_verify([mutant], keychain)
            assert (accepted, dropped) == ([], 1)
            total += 1
    assert total == len(packet.body) + 16


def test_single_bit_flips_detected_on_high_tier():
    state = init_key_state(shared_test_secret())
    keychain = make_keychain()
    rng = random.Random(5)
    packet = protect(rng.randbytes(64), Sensitivity.HIGH_SENSITIVE, state)
    for _ in range(100):
        which = rng.randrange(len(packet.body) + len(packet.tag))
        body, tag = bytearray(packet.body), bytearray(packet.tag)
        if which < len(body):
            body[which] ^= 1 << rng.randrange(8)
        else:
            tag[which - len(body)] ^= 1 << rng.randrange(8)
        mutant = ProtectedPacket(packet.tier, packet.interval_index, bytes(body), bytes(tag))
        accepted, dropped = dsm_verify([mutant], keychain)
        assert (accepted, dropped) == ([], 1)


def test_keychain_window_limits():
    secret = shared_test_secret()
    chain = KeyChain(secret, behind=2, ahead=2)
    for _ in range(5):
        chain.advance()
    assert chain.current_index == 5
    for interval in (3, 4, 5, 6, 7):
        assert chain(interval).interval_index == interval
    for interval in (2, 8, -1):
        with pytest.raises(UnknownIntervalError):
            chain(interval)
    unbounded = KeyChain(secret, behind=None, ahead=2)
    for _ in range(5):
        unbounded.advance()
    assert unbounded(0).interval_index == 0


def test_dsm_verify_raises_on_underivable_interval():
    state = init_key_state(shared_test_secret())
    packet = protect(b"x", Sensitivity.LOW_SENSITIVE, state)
    far = ProtectedPacket(packet.tier, 40, packet.body, packet.tag)
    with pytest.raises(UnknownIntervalError):
        dsm_verify([far], make_keychain())


def test_packet_wire_format_round_trip_and_golden_bytes():
    state = init_key_state(shared_test_secret())
    low = protect(b"abc", Sensitivity.LOW_SENSITIVE, state)
    assert encode_packet(low).hex() == FROZEN_LOW_WIRE
    for tier in Sensitivity:
        packet = protect(b"payload bytes", tier, state)
        assert decode_packet(encode_packet(packet)) == packet


def test_decode_packet_rejects_malformed_data():
    state = init_key_state(shared_test_secret())
    wire = encode_packet(protect(b"abc", Sensitivity.LOW_SENSITIVE, state))
    with pytest.raises(ValueError):
        decode_packet(wire[:-1])
    with pytest.raises(ValueError):
        decode_packet(wire + b"\x00")
    with pytest.raises(ValueError):
        decode_packet(b"")


def test_integrity_tag_shape():
    assert len(integrity_tag(b"k", b"data")) == 16
