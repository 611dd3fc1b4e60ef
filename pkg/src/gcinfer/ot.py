"""1-out-of-2 oblivious transfer for the evaluator's input labels.

Secure mode runs a Diffie-Hellman base transfer over a well-known
prime-order subgroup (RFC 3526 modular group, 2048-bit): the sender
publishes one group element A = g^a for the batch; per transfer the
receiver sends B = g^b * A^c for choice bit c, the sender derives the two
pad keys H(B^a), H((B/A)^a) and returns both padded messages, and the
receiver unpads with H(A^b).  Exponents are drawn at 256 bits.

Test-dealer mode skips cryptography entirely - the receiver discloses its
choice bits and the sender returns the selected messages.  It exists so CI
and cost-accounting tests are fast and bit-deterministic; it is insecure
and is labelled as such everywhere it can be switched on.

Both modes run as one upfront batch per session (the evaluator's inputs
are static across clock cycles, so nothing is gained by splitting).
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

import numpy as np

try:
    from gmpy2 import jacobi, mpz, powmod
except ImportError:  # pragma: no cover - gmpy2 is a hard dep, but stay usable
    mpz = int

    def powmod(b, e, m):
        return pow(b, e, m)

    def jacobi(a, n):
        return 1 if pow(a, (n - 1) // 2, n) == 1 else -1

MSG_BYTES = 16
GROUP_ID = "modp2048-sha256"
DEALER_ID = "test-dealer"
EXPONENT_BITS = 256

# RFC 3526 group 14: p = 2q+1 safe prime, generator 2
_P_HEX = (
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF")
P = int(_P_HEX, 16)
G = 2
Q = (P - 1) // 2
_PLEN = (P.bit_length() + 7) // 8


class ChannelError(IOError):
    pass


class BatchSizeMismatch(ValueError):
    pass


class GroupElementInvalid(ValueError):
    pass


@dataclass
class OtBatch:
    """Sender-side message pairs: (n, 2, 16) bytes as label pairs."""

    pairs: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.uint64).reshape(-1, 2, 2)

    @property
    def n(self) -> int:
        return len(self.pairs)


def _elem_bytes(x: int) -> bytes:
    return x.to_bytes(_PLEN, "big")


def _check_elem(x: int) -> int:
    if not 1 < x < P - 1:
        raise GroupElementInvalid("element outside the group range")
    # p is a safe prime, so the order-q subgroup is exactly the quadratic
    # residues; the Jacobi symbol decides membership without a modexp
    if jacobi(mpz(x), mpz(P)) != 1:
        raise GroupElementInvalid("element not in the prime-order subgroup")
    return x


def _pad(shared: int, index: int) -> bytes:
    return hashlib.sha256(_elem_bytes(shared) + index.to_bytes(8, "big")).digest()[:MSG_BYTES]


def _label_bytes(pair_row: np.ndarray) -> bytes:
    return int(pair_row[0]).to_bytes(8, "big") + int(pair_row[1]).to_bytes(8, "big")


def _label_from(buf: bytes) -> np.ndarray:
    return np.array([int.from_bytes(buf[:8], "big"),
                     int.from_bytes(buf[8:], "big")], dtype=np.uint64)


def _xor16(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def _rand_exp(rng) -> int:
    return rng.randrange(1, 1 << EXPONENT_BITS)


# ---------------------------------------------------------------------------
# Secure mode, message-passing form.  The session layer moves the opaque
# payload blobs; each side advances its own state machine.


class SecureReceiver:
    """Holds the choice bits; emits one public key per transfer."""

    def __init__(self, choices: np.ndarray, rng=None):
        self.choices = np.asarray(choices, dtype=np.uint8).reshape(-1)
        self._rng = rng or secrets.SystemRandom()
        self._b = None
        self._a_pub = None

    def first_message(self) -> bytes:
        return len(self.choices).to_bytes(4, "big")

    def respond(self, sender_setup: bytes) -> bytes:
        n = int.from_bytes(sender_setup[:4], "big")
        if n != len(self.choices):
            raise BatchSizeMismatch(f"sender expects {n}, receiver has {len(self.choices)}")
        a_pub = _check_elem(int.from_bytes(sender_setup[4:4 + _PLEN], "big"))
        self._a_pub = a_pub
        self._b = [_rand_exp(self._rng) for _ in range(n)]
        out = bytearray()
        for i, (b, c) in enumerate(zip(self._b, self.choices)):
            elem = powmod(G, b, P)
            if c:
                elem = (mpz(elem) * a_pub) % P
            out += _elem_bytes(int(elem))
        return bytes(out)

    def finish(self, padded: bytes) -> np.ndarray:
        n = len(self.choices)
        if len(padded) != n * 2 * MSG_BYTES:
            raise BatchSizeMismatch("padded message block has the wrong size")
        out = np.zeros((n, 2), dtype=np.uint64)
        for i in range(n):
            key = _pad(int(powmod(self._a_pub, self._b[i], P)), i)
            row = padded[i * 32:(i + 1) * 32]
            chunk = row[MSG_BYTES:] if self.choices[i] else row[:MSG_BYTES]
            out[i] = _label_from(_xor16(chunk, key))
        return out


class SecureSender:
    def __init__(self, batch: OtBatch, rng=None):
        self.batch = batch
        self._rng = rng or secrets.SystemRandom()
        self._a = _rand_exp(self._rng)
        self._a_pub = int(powmod(G, self._a, P))

    def setup_message(self, receiver_hello: bytes) -> bytes:
        n = int.from_bytes(receiver_hello[:4], "big")
        if n != self.batch.n:
            raise BatchSizeMismatch(f"receiver expects {n}, sender has {self.batch.n}")
        return self.batch.n.to_bytes(4, "big") + _elem_bytes(self._a_pub)

    def final_message(self, receiver_keys: bytes) -> bytes:
        n = self.batch.n
        if len(receiver_keys) != n * _PLEN:
            raise BatchSizeMismatch("receiver key block has the wrong size")
        inv_a_pub = powmod(self._a_pub, P - 2, P)
        out = bytearray()
        for i in range(n):
            bpub = _check_elem(int.from_bytes(
                receiver_keys[i * _PLEN:(i + 1) * _PLEN], "big"))
            k0 = _pad(int(powmod(bpub, self._a, P)), i)
            k1 = _pad(int(powmod((mpz(bpub) * inv_a_pub) % P, self._a, P)), i)
            out += _xor16(_label_bytes(self.batch.pairs[i, 0]), k0)
            out += _xor16(_label_bytes(self.batch.pairs[i, 1]), k1)
        return bytes(out)


# ---------------------------------------------------------------------------
# Test-dealer mode (INSECURE): choices travel in the clear.


class DealerReceiver:
    def __init__(self, choices: np.ndarray):
        self.choices = np.asarray(choices, dtype=np.uint8).reshape(-1)

    def first_message(self) -> bytes:
        return len(self.choices).to_bytes(4, "big") + bytes(
            np.packbits(self.choices, bitorder="little"))

    def finish(self, selected: bytes) -> np.ndarray:
        n = len(self.choices)
        if len(selected) != n * MSG_BYTES:
            raise BatchSizeMismatch("selected message block has the wrong size")
        return np.stack([_label_from(selected[i * 16:(i + 1) * 16]) for i in range(n)]) \
            if n else np.zeros((0, 2), dtype=np.uint64)


class DealerSender:
    def __init__(self, batch: OtBatch):
        self.batch = batch

    def respond(self, receiver_msg: bytes) -> bytes:
        n = int.from_bytes(receiver_msg[:4], "big")
        if n != self.batch.n:
            raise BatchSizeMismatch(f"receiver expects {n}, sender has {self.batch.n}")
        choices = np.unpackbits(np.frombuffer(receiver_msg[4:], dtype=np.uint8),
                                bitorder="little")[:n]
        out = bytearray()
        for i in range(n):
            out += _label_bytes(self.batch.pairs[i, int(choices[i])])
        return bytes(out)


# ---------------------------------------------------------------------------


def ot_run(pairs: np.ndarray, choices: np.ndarray, mode: str = "secure",
           rng=None) -> np.ndarray:
    """In-process batch transfer (both roles local): the reference for
    session-level tests and the cross-mode consistency check."""
    batch = OtBatch(pairs)
    choices = np.asarray(choices, dtype=np.uint8).reshape(-1)
    if batch.n != len(choices):
        raise BatchSizeMismatch(f"{batch.n} pairs vs {len(choices)} choices")
    if mode == "secure":
        recv = SecureReceiver(choices, rng=rng)
        send = SecureSender(batch, rng=rng)
        setup = send.setup_message(recv.first_message())
        keys = recv.respond(setup)
        return recv.finish(send.final_message(keys))
    if mode == "test-dealer":
        recv = DealerReceiver(choices)
        send = DealerSender(batch)
        return recv.finish(send.respond(recv.first_message()))
    raise ValueError(f"unknown OT mode {mode!r}")
