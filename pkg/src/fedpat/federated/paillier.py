"""Paillier additively homomorphic encryption with fixed-point real encoding.

Uses the g = n + 1 variant: encryption is ``c = g**m * r**n mod n**2``
and decryption ``L(c**lam mod n**2) * mu mod n`` with ``L(x) = (x - 1) // n``.
"""

from __future__ import annotations

import math
import random
import secrets
import warnings
from dataclasses import dataclass
from typing import Optional

import gmpy2

DEFAULT_KEY_BITS = 2048
FRACTION_BITS = 48
_PRIME_ATTEMPTS = 1000


class PaillierError(ValueError):
    pass


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int
    bits: int

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    def to_dict(self) -> dict:
        return {"n": str(self.n), "g": str(self.g), "bits": self.bits}

    @classmethod
    def from_dict(cls, d: dict) -> "PublicKey":
        n = int(d["n"])
        return cls(n=n, g=int(d.get("g", n + 1)), bits=int(d.get("bits", n.bit_length())))


@dataclass(frozen=True)
class PrivateKey:
    lam: int
    mu: int

    def to_dict(self) -> dict:
        return {"lambda": str(self.lam), "mu": str(self.mu)}

    @classmethod
    def from_dict(cls, d: dict) -> "PrivateKey":
        return cls(lam=int(d["lambda"]), mu=int(d["mu"]))


@dataclass(frozen=True)
class PaillierKeypair:
    public: PublicKey
    private: PrivateKey

    def to_dict(self) -> dict:
        return {"public": self.public.to_dict(), "private": self.private.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PaillierKeypair":
        return cls(PublicKey.from_dict(d["public"]), PrivateKey.from_dict(d["private"]))


@dataclass(frozen=True)
class Ciphertext:
    value: int
    exponent: int = 0


def keypair_from_primes(p: int, q: int) -> PaillierKeypair:
    if p == q:
        raise PaillierError("p and q must be distinct")
    n = p * q
    phi = (p - 1) * (q - 1)
    if math.gcd(n, phi) != 1:
        raise PaillierError("gcd(pq, (p-1)(q-1)) must be 1")
    lam = phi // math.gcd(p - 1, q - 1)
    mu = pow(lam, -1, n)
    return PaillierKeypair(PublicKey(n=n, g=n + 1, bits=n.bit_length()), PrivateKey(lam=lam, mu=mu))


def _random_prime(rng: random.Random, bits: int) -> int:
    for _ in range(_PRIME_ATTEMPTS):
        # top two bits set so that p*q has exactly 2*bits bits
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(candidate - 1))
        if p.bit_length() == bits:
            return p
    raise PaillierError(f"could not find a {bits}-bit prime")


def keygen(bits: int = DEFAULT_KEY_BITS, seed: Optional[int] = None) -> PaillierKeypair:
    """Generate a keypair whose modulus has ``bits`` bits.

    Deterministic for a given ``seed``; with ``seed=None`` the primes come
    from the OS entropy source.
    """
    if bits < 16:
        raise PaillierError("key size must be at least 16 bits")
    if bits < 2048:
        warnings.warn(f"{bits}-bit Paillier keys are for testing only", stacklevel=2)
    rng = random.Random(seed) if seed is not None else random.SystemRandom()
    half = bits // 2
    for _ in range(_PRIME_ATTEMPTS):
        p = _random_prime(rng, half)
        q = _random_prime(rng, bits - half)
        if p == q:
            continue
        try:
            return keypair_from_primes(p, q)
        except PaillierError:
            continue
    raise PaillierError("prime generation failed")


def random_nonce(public: PublicKey, rng: Optional[random.Random] = None) -> int:
    while True:
        r = rng.randrange(1, public.n) if rng is not None else secrets.randbelow(public.n - 1) + 1
        if math.gcd(r, public.n) == 1:
            return r


def encrypt(public: PublicKey, m: int, r: Optional[int] = None, exponent: int = 0,
            rng: Optional[random.Random] = None) -> Ciphertext:
    if not 0 <= m < public.n:
        raise PaillierError(f"plaintext must be in [0, n), got {m}")
    if r is None:
        r = random_nonce(public, rng)
    elif math.gcd(r, public.n) != 1:
        raise PaillierError("nonce must be coprime to n")
    nsq = public.nsquare
    # g**m = 1 + m*n (mod n**2) when g = n + 1
    gm = (1 + m * public.n) % nsq if public.g == public.n + 1 else pow(public.g, m, nsq)
    return Ciphertext(value=int(gm * gmpy2.powmod(r, public.n, nsq) % nsq), exponent=exponent)


def decrypt(keypair: PaillierKeypair, c: Ciphertext) -> int:
    pub, priv = keypair.public, keypair.private
    if not 0 < c.value < pub.nsquare:
        raise PaillierError("ciphertext out of range")
    x = int(gmpy2.powmod(c.value, priv.lam, pub.nsquare))
    return (x - 1) // pub.n * priv.mu % pub.n


def he_add(public: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Ciphertext of the sum of the two plaintexts (mod n)."""
    if c1.exponent != c2.exponent:
        raise PaillierError(f"exponent mismatch: {c1.exponent} != {c2.exponent}")
    return Ciphertext(value=c1.value * c2.value % public.nsquare, exponent=c1.exponent)


def encode_fixed(x: float, n: int, fraction_bits: int = FRACTION_BITS) -> tuple[int, int]:
    """Fixed-point encode a real as ``round(x * 2**f) mod n``.

    Negative values wrap into the upper half of Z_n.
    """
    if not math.isfinite(x):
        raise PaillierError(f"cannot encode {x}")
    if abs(x) >= n / 2 ** (fraction_bits + 2):
        raise PaillierError(f"|{x}| too large for a {n.bit_length()}-bit modulus")
    # scaling by a power of two is exact, so only the sub-resolution part is rounded away
    return round(math.ldexp(float(x), fraction_bits)) % n, fraction_bits


def decode_fixed(mantissa: int, exponent: int, n: int) -> float:
    if not 0 <= mantissa < n:
        raise PaillierError("mantissa out of range")
    signed = mantissa - n if mantissa > n // 2 else mantissa
    return signed / (1 << exponent)


def encrypt_real(public: PublicKey, x: float, fraction_bits: int = FRACTION_BITS,
                 rng: Optional[random.Random] = None) -> Ciphertext:
    mantissa, exponent = encode_fixed(x, public.n, fraction_bits)
    return encrypt(public, mantissa, exponent=exponent, rng=rng)


def decrypt_real(keypair: PaillierKeypair, c: Ciphertext) -> float:
    return decode_fixed(decrypt(keypair, c), c.exponent, keypair.public.n)
