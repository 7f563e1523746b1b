"""ML-KEM module-lattice key encapsulation (FIPS 203), all three parameter sets.

Polynomial arithmetic runs on numpy int64 arrays over Z_q[X]/(X^256 + 1),
q = 3329, with a vectorized layer-by-layer NTT.  All randomness enters
through explicit seeds: keygen takes d||z (64 bytes), encapsulation takes
the 32-byte message seed m, so every operation is a pure function of its
inputs.  Decapsulation of a non-matching ciphertext returns the implicit
rejection secret rather than raising.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import BadCiphertextLength, BadKeyLength, BadSeedLength

Q = 3329
N = 256
_NINV = 3303  # 128^-1 mod q


def _bitrev7(x: int) -> int:
    return int(f"{x:07b}"[::-1], 2)


_ZETAS = np.array([pow(17, _bitrev7(i), Q) for i in range(128)], dtype=np.int64)
_GAMMAS = np.array([pow(17, 2 * _bitrev7(i) + 1, Q) for i in range(128)], dtype=np.int64)


@dataclass(frozen=True)
class MlKemParams:
    name: str
    k: int
    eta1: int
    eta2: int
    du: int
    dv: int

    @property
    def ek_len(self) -> int:
        return 384 * self.k + 32

    @property
    def dk_len(self) -> int:
        return 768 * self.k + 96

    @property
    def ct_len(self) -> int:
        return 32 * (self.du * self.k + self.dv)


PARAM_SETS = {
    "ML-KEM-512": MlKemParams("ML-KEM-512", 2, 3, 2, 10, 4),
    "ML-KEM-768": MlKemParams("ML-KEM-768", 3, 2, 2, 10, 4),
    "ML-KEM-1024": MlKemParams("ML-KEM-1024", 4, 2, 2, 11, 5),
}

KEYGEN_SEED_LEN = 64
ENCAPS_SEED_LEN = 32
SHARED_SECRET_LEN = 32


# --- polynomial layer -------------------------------------------------------

def _ntt(a: np.ndarray) -> np.ndarray:
    out = a % Q
    k = 1
    length = 128
    while length >= 2:
        nb = N // (2 * length)
        z = _ZETAS[k : k + nb]
        k += nb
        v = out.reshape(*out.shape[:-1], nb, 2, length)
        lo = v[..., 0, :]
        hi = v[..., 1, :]
        t = z[:, None] * hi % Q
        v[..., 1, :] = (lo - t) % Q
        v[..., 0, :] = (lo + t) % Q
        length //= 2
    return out


def _ntt_inv(a: np.ndarray) -> np.ndarray:
    out = a % Q
    k = 127
    length = 2
    while length <= 128:
        nb = N // (2 * length)
        z = _ZETAS[k - nb + 1 : k + 1][::-1]
        k -= nb
        v = out.reshape(*out.shape[:-1], nb, 2, length)
        lo = v[..., 0, :].copy()
        hi = v[..., 1, :].copy()
        v[..., 0, :] = (lo + hi) % Q
        v[..., 1, :] = z[:, None] * (hi - lo) % Q
        length *= 2
    return out * _NINV % Q


def _basemul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # pairwise products in the 128 quadratic extensions
    a0, a1 = a[..., 0::2], a[..., 1::2]
    b0, b1 = b[..., 0::2], b[..., 1::2]
    lo = (a0 * b0 + a1 * b1 % Q * _GAMMAS) % Q
    hi = (a0 * b1 + a1 * b0) % Q
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.int64)
    out[..., 0::2] = lo
    out[..., 1::2] = hi
    return out


def _matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    # mat: (k, k, 256), vec: (k, 256) -> (k, 256), all in NTT domain
    return _basemul(mat, vec[np.newaxis, :, :]).sum(axis=1) % Q


# --- sampling ----------------------------------------------------------------

@lru_cache(maxsize=128)
def _expand_matrix(rho: bytes, k: int) -> np.ndarray:
    rows = [[_sample_uniform(rho + bytes([j, i])) for j in range(k)] for i in range(k)]
    return np.array(rows, dtype=np.int64)


def _sample_uniform(seed: bytes) -> np.ndarray:
    n = 1536
    while True:
        raw = np.frombuffer(hashlib.shake_128(seed).digest(n), dtype=np.uint8)
        trip = raw[: len(raw) - len(raw) % 3].reshape(-1, 3).astype(np.int64)
        d1 = trip[:, 0] + 256 * (trip[:, 1] % 16)
        d2 = trip[:, 1] // 16 + 16 * trip[:, 2]
        cand = np.stack([d1, d2], axis=1).ravel()
        cand = cand[cand < Q]
        if cand.size >= N:
            return cand[:N]
        n *= 2


def _sample_cbd(seed: bytes, nonce: int, eta: int) -> np.ndarray:
    raw = hashlib.shake_256(seed + bytes([nonce])).digest(64 * eta)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    bits = bits.reshape(N, 2, eta).astype(np.int64)
    return (bits[:, 0, :].sum(axis=1) - bits[:, 1, :].sum(axis=1)) % Q


# --- bit packing -------------------------------------------------------------

def _encode(poly: np.ndarray, d: int) -> bytes:
    bits = ((poly[:, np.newaxis] >> np.arange(d)) & 1).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def _decode(data: bytes, d: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    return (bits[: N * d].reshape(N, d).astype(np.int64) << np.arange(d)).sum(axis=1)


def _compress(poly: np.ndarray, d: int) -> np.ndarray:
    return ((poly << d) + (Q - 1) // 2) // Q % (1 << d)


def _decompress(poly: np.ndarray, d: int) -> np.ndarray:
    return (Q * poly + (1 << (d - 1))) >> d


# --- K-PKE core --------------------------------------------------------------

def _pke_keygen(p: MlKemParams, d: bytes):
    digest = hashlib.sha3_512(d + bytes([p.k])).digest()
    rho, sigma = digest[:32], digest[32:]
    a_hat = _expand_matrix(rho, p.k)
    s = np.stack([_sample_cbd(sigma, i, p.eta1) for i in range(p.k)])
    e = np.stack([_sample_cbd(sigma, p.k + i, p.eta1) for i in range(p.k)])
    s_hat = _ntt(s)
    t_hat = (_matvec(a_hat, s_hat) + _ntt(e)) % Q
    ek = b"".join(_encode(t_hat[i], 12) for i in range(p.k)) + rho
    dk = b"".join(_encode(s_hat[i], 12) for i in range(p.k))
    return ek, dk


def _pke_encrypt(p: MlKemParams, ek: bytes, m: bytes, r: bytes) -> bytes:
    t_hat = np.stack([_decode(ek[384 * i : 384 * (i + 1)], 12) for i in range(p.k)])
    a_hat = _expand_matrix(ek[384 * p.k :], p.k)
    y = np.stack([_sample_cbd(r, i, p.eta1) for i in range(p.k)])
    e1 = np.stack([_sample_cbd(r, p.k + i, p.eta2) for i in range(p.k)])
    e2 = _sample_cbd(r, 2 * p.k, p.eta2)
    y_hat = _ntt(y)
    u = (_ntt_inv(_matvec(a_hat.swapaxes(0, 1), y_hat)) + e1) % Q
    mu = _decompress(_decode(m, 1), 1)
    v = (_ntt_inv(_basemul(t_hat, y_hat).sum(axis=0)) + e2 + mu) % Q
    c1 = b"".join(_encode(_compress(u[i], p.du), p.du) for i in range(p.k))
    c2 = _encode(_compress(v, p.dv), p.dv)
    return c1 + c2


def _pke_decrypt(p: MlKemParams, dk: bytes, ct: bytes) -> bytes:
    split = 32 * p.du * p.k
    u = np.stack(
        [_decompress(_decode(ct[32 * p.du * i : 32 * p.du * (i + 1)], p.du), p.du) for i in range(p.k)]
    )
    v = _decompress(_decode(ct[split:], p.dv), p.dv)
    s_hat = np.stack([_decode(dk[384 * i : 384 * (i + 1)], 12) for i in range(p.k)])
    w = (v - _ntt_inv(_basemul(s_hat, _ntt(u)).sum(axis=0) % Q)) % Q
    return _encode(_compress(w, 1), 1)


# --- ML-KEM API --------------------------------------------------------------

def keygen(params: MlKemParams, seed: bytes) -> tuple[bytes, bytes]:
    """Derive an (ek, dk) pair from a 64-byte d||z seed."""
    if len(seed) != KEYGEN_SEED_LEN:
        raise BadSeedLength(f"{params.name} keygen needs {KEYGEN_SEED_LEN} bytes, got {len(seed)}")
    d, z = seed[:32], seed[32:]
    ek, dk_pke = _pke_keygen(params, d)
    dk = dk_pke + ek + hashlib.sha3_256(ek).digest() + z
    return ek, dk


def encaps(params: MlKemParams, ek: bytes, seed: bytes) -> tuple[bytes, bytes]:
    """Encapsulate to ek with explicit 32-byte randomness; returns (ct, ss)."""
    if len(ek) != params.ek_len:
        raise BadKeyLength(f"{params.name} ek is {params.ek_len} bytes, got {len(ek)}")
    if len(seed) != ENCAPS_SEED_LEN:
        raise BadSeedLength(f"{params.name} encaps needs {ENCAPS_SEED_LEN} bytes, got {len(seed)}")
    g = hashlib.sha3_512(seed + hashlib.sha3_256(ek).digest()).digest()
    ss, r = g[:32], g[32:]
    return _pke_encrypt(params, ek, seed, r), ss


def decaps(params: MlKemParams, dk: bytes, ct: bytes) -> bytes:
    """Recover the shared secret; implicit rejection on mismatched ciphertexts."""
    if len(dk) != params.dk_len:
        raise BadKeyLength(f"{params.name} dk is {params.dk_len} bytes, got {len(dk)}")
    if len(ct) != params.ct_len:
        raise BadCiphertextLength(f"{params.name} ct is {params.ct_len} bytes, got {len(ct)}")
    dk_pke = dk[: 384 * params.k]
    ek = dk[384 * params.k : 768 * params.k + 32]
    h = dk[768 * params.k + 32 : 768 * params.k + 64]
    z = dk[768 * params.k + 64 :]
    m = _pke_decrypt(params, dk_pke, ct)
    g = hashlib.sha3_512(m + h).digest()
    ss, r = g[:32], g[32:]
    if _pke_encrypt(params, ek, m, r) != ct:
        return hashlib.shake_256(z + ct).digest(32)
    return ss
