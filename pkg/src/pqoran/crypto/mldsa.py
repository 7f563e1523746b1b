"""ML-DSA module-lattice signatures (FIPS 204), all three parameter sets.

Arithmetic is vectorized over numpy int64 arrays mod q = 8380417; rejection
sampling, hint handling, and the hedged/deterministic split follow the
standard.  Signing is deterministic when no 32-byte randomizer is supplied.
Per-key expansions (matrix A, NTTForms of s1/s2/t0) are cached so repeated
signs and verifies under the same key avoid re-deriving them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import BadKeyLength, BadSeedLength, ContextTooLong

Q = 8380417
N = 256
D = 13
_NINV = pow(256, Q - 2, Q)


def _bitrev8(x: int) -> int:
    return int(f"{x:08b}"[::-1], 2)


_ZETAS = np.array([pow(1753, _bitrev8(m), Q) for m in range(256)], dtype=np.int64)


@dataclass(frozen=True)
class MlDsaParams:
    name: str
    tau: int
    lam: int
    gamma1: int
    gamma2: int
    k: int
    l: int
    eta: int
    omega: int

    @property
    def beta(self) -> int:
        return self.tau * self.eta

    @property
    def z_bits(self) -> int:
        return 1 + (self.gamma1 - 1).bit_length()

    @property
    def w1_bits(self) -> int:
        return ((Q - 1) // (2 * self.gamma2) - 1).bit_length()

    @property
    def eta_bits(self) -> int:
        return (2 * self.eta).bit_length()

    @property
    def pk_len(self) -> int:
        return 32 + 320 * self.k

    @property
    def sk_len(self) -> int:
        return 128 + 32 * self.eta_bits * (self.k + self.l) + 416 * self.k

    @property
    def sig_len(self) -> int:
        return self.lam // 4 + 32 * self.z_bits * self.l + self.omega + self.k


PARAM_SETS = {
    "ML-DSA-44": MlDsaParams("ML-DSA-44", 39, 128, 1 << 17, (Q - 1) // 88, 4, 4, 2, 80),
    "ML-DSA-65": MlDsaParams("ML-DSA-65", 49, 192, 1 << 19, (Q - 1) // 32, 6, 5, 4, 55),
    "ML-DSA-87": MlDsaParams("ML-DSA-87", 60, 256, 1 << 19, (Q - 1) // 32, 8, 7, 2, 75),
}

KEYGEN_SEED_LEN = 32
SIGN_SEED_LEN = 32


# --- NTT ----------------------------------------------------------------------

def _ntt(a: np.ndarray) -> np.ndarray:
    out = a % Q
    m = 1
    length = 128
    while length >= 1:
        nb = N // (2 * length)
        z = _ZETAS[m : m + nb]
        m += nb
        v = out.reshape(*out.shape[:-1], nb, 2, length)
        lo = v[..., 0, :]
        t = z[:, None] * v[..., 1, :] % Q
        v[..., 1, :] = (lo - t) % Q
        v[..., 0, :] = (lo + t) % Q
        length //= 2
    return out


def _ntt_inv(a: np.ndarray) -> np.ndarray:
    out = a % Q
    m = 255
    length = 1
    while length <= 128:
        nb = N // (2 * length)
        z = _ZETAS[m - nb + 1 : m + 1][::-1]
        m -= nb
        v = out.reshape(*out.shape[:-1], nb, 2, length)
        lo = v[..., 0, :].copy()
        hi = v[..., 1, :].copy()
        v[..., 0, :] = (lo + hi) % Q
        v[..., 1, :] = z[:, None] * (hi - lo) % Q
        length *= 2
    return out * _NINV % Q


def _matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    # mat: (k, l, 256), vec: (l, 256), NTT domain pointwise products
    return (mat * vec[np.newaxis, :, :] % Q).sum(axis=1) % Q


# --- rounding -----------------------------------------------------------------

def _centered(a: np.ndarray, modulus: int) -> np.ndarray:
    r = a % modulus
    return np.where(r > modulus // 2, r - modulus, r)


def _inf_norm(a: np.ndarray) -> int:
    return int(np.abs(_centered(a, Q)).max())


def _power2round(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = a % Q
    r0 = _centered(r, 1 << D)
    return (r - r0) >> D, r0


def _decompose(a: np.ndarray, gamma2: int) -> tuple[np.ndarray, np.ndarray]:
    r = a % Q
    r0 = _centered(r, 2 * gamma2)
    edge = (r - r0) == Q - 1
    r1 = np.where(edge, 0, (r - r0) // (2 * gamma2))
    r0 = np.where(edge, r0 - 1, r0)
    return r1, r0


def _use_hint(hints: np.ndarray, a: np.ndarray, gamma2: int) -> np.ndarray:
    modulus = (Q - 1) // (2 * gamma2)
    r1, r0 = _decompose(a, gamma2)
    bumped = np.where(r0 > 0, (r1 + 1) % modulus, (r1 - 1) % modulus)
    return np.where(hints == 1, bumped, r1)


# --- packing ------------------------------------------------------------------

def _pack(arr: np.ndarray, nbits: int) -> bytes:
    bits = ((arr.reshape(-1, 1) >> np.arange(nbits)) & 1).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def _unpack(data: bytes, nbits: int, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    vals = bits[: count * nbits].reshape(count, nbits).astype(np.int64)
    return (vals << np.arange(nbits)).sum(axis=1)


def _pack_signed(arr: np.ndarray, bound_hi: int, nbits: int) -> bytes:
    return _pack(bound_hi - _centered(arr, Q), nbits)


def _unpack_signed(data: bytes, bound_hi: int, nbits: int, count: int) -> np.ndarray:
    return (bound_hi - _unpack(data, nbits, count)) % Q


def _pack_hints(h: np.ndarray, omega: int) -> bytes:
    k = h.shape[0]
    out = bytearray(omega + k)
    idx = 0
    for i in range(k):
        for j in np.nonzero(h[i])[0]:
            out[idx] = int(j)
            idx += 1
        out[omega + i] = idx
    return bytes(out)


def _unpack_hints(data: bytes, omega: int, k: int) -> np.ndarray | None:
    h = np.zeros((k, N), dtype=np.int64)
    idx = 0
    for i in range(k):
        stop = data[omega + i]
        if stop < idx or stop > omega:
            return None
        first = idx
        while idx < stop:
            if idx > first and data[idx - 1] >= data[idx]:
                return None
            h[i, data[idx]] = 1
            idx += 1
    if any(data[j] != 0 for j in range(idx, omega)):
        return None
    return h


# --- samplers -----------------------------------------------------------------

@lru_cache(maxsize=128)
def _expand_a(rho: bytes, k: int, l: int) -> np.ndarray:
    rows = [[_rej_ntt(rho + bytes([s, r])) for s in range(l)] for r in range(k)]
    return np.array(rows, dtype=np.int64)


def _rej_ntt(seed: bytes) -> np.ndarray:
    n = 1024
    while True:
        raw = np.frombuffer(hashlib.shake_128(seed).digest(n), dtype=np.uint8)
        trip = raw[: len(raw) - len(raw) % 3].reshape(-1, 3).astype(np.int64)
        cand = trip[:, 0] | (trip[:, 1] << 8) | ((trip[:, 2] & 0x7F) << 16)
        cand = cand[cand < Q]
        if cand.size >= N:
            return cand[:N]
        n *= 2


def _rej_bounded(seed: bytes, eta: int) -> np.ndarray:
    n = 512
    while True:
        raw = np.frombuffer(hashlib.shake_256(seed).digest(n), dtype=np.uint8)
        halves = np.stack([raw % 16, raw // 16], axis=1).ravel().astype(np.int64)
        if eta == 2:
            keep = halves[halves < 15]
            vals = 2 - keep % 5
        else:
            keep = halves[halves < 9]
            vals = 4 - keep
        if keep.size >= N:
            return vals[:N] % Q
        n *= 2


def _expand_mask(rho: bytes, kappa: int, p: MlDsaParams) -> np.ndarray:
    polys = []
    for r in range(p.l):
        idx = kappa + r
        raw = hashlib.shake_256(rho + bytes([idx & 0xFF, idx >> 8])).digest(32 * p.z_bits)
        polys.append(_unpack_signed(raw, p.gamma1, p.z_bits, N))
    return np.stack(polys)


def _sample_in_ball(seed: bytes, tau: int) -> np.ndarray:
    stream = hashlib.shake_256(seed).digest(8 + 512)
    signs = int.from_bytes(stream[:8], "little")
    c = np.zeros(N, dtype=np.int64)
    pos = 8
    for i in range(N - tau, N):
        while stream[pos] > i:
            pos += 1
        j = stream[pos]
        pos += 1
        c[i] = c[j]
        c[j] = 1 if (signs & 1) == 0 else Q - 1
        signs >>= 1
    return c


# --- encodings ----------------------------------------------------------------

def _w1_encode(w1: np.ndarray, p: MlDsaParams) -> bytes:
    return b"".join(_pack(w1[i], p.w1_bits) for i in range(p.k))


def _pk_encode(rho: bytes, t1: np.ndarray) -> bytes:
    return rho + b"".join(_pack(row, 10) for row in t1)


def _pk_decode(p: MlDsaParams, pk: bytes):
    rho = pk[:32]
    t1 = np.stack([_unpack(pk[32 + 320 * i : 32 + 320 * (i + 1)], 10, N) for i in range(p.k)])
    return rho, t1


def _sk_encode(p: MlDsaParams, rho, key, tr, s1, s2, t0) -> bytes:
    parts = [rho, key, tr]
    parts += [_pack_signed(s1[i], p.eta, p.eta_bits) for i in range(p.l)]
    parts += [_pack_signed(s2[i], p.eta, p.eta_bits) for i in range(p.k)]
    parts += [_pack_signed(t0[i], 1 << (D - 1), D) for i in range(p.k)]
    return b"".join(parts)


def _sk_decode(p: MlDsaParams, sk: bytes):
    rho, key, tr = sk[:32], sk[32:64], sk[64:128]
    pos = 128
    step = 32 * p.eta_bits
    s1 = []
    for _ in range(p.l):
        s1.append(_unpack_signed(sk[pos : pos + step], p.eta, p.eta_bits, N))
        pos += step
    s2 = []
    for _ in range(p.k):
        s2.append(_unpack_signed(sk[pos : pos + step], p.eta, p.eta_bits, N))
        pos += step
    t0 = []
    for _ in range(p.k):
        t0.append(_unpack_signed(sk[pos : pos + 416], 1 << (D - 1), D, N))
        pos += 416
    return rho, key, tr, np.stack(s1), np.stack(s2), np.stack(t0)


# --- key material caches -------------------------------------------------------

@lru_cache(maxsize=64)
def _sign_state(name: str, sk: bytes):
    p = PARAM_SETS[name]
    rho, key, tr, s1, s2, t0 = _sk_decode(p, sk)
    return {
        "a": _expand_a(rho, p.k, p.l),
        "key": key,
        "tr": tr,
        "s1_hat": _ntt(s1),
        "s2_hat": _ntt(s2),
        "t0_hat": _ntt(t0),
    }


@lru_cache(maxsize=128)
def _verify_state(name: str, pk: bytes):
    p = PARAM_SETS[name]
    rho, t1 = _pk_decode(p, pk)
    return {
        "a": _expand_a(rho, p.k, p.l),
        "t1_hat": _ntt((t1 << D) % Q),
        "tr": hashlib.shake_256(pk).digest(64),
    }


# --- public operations ----------------------------------------------------------

def keygen(params: MlDsaParams, seed: bytes) -> tuple[bytes, bytes]:
    """Derive a (pk, sk) pair from the 32-byte xi seed."""
    if len(seed) != KEYGEN_SEED_LEN:
        raise BadSeedLength(f"{params.name} keygen needs {KEYGEN_SEED_LEN} bytes, got {len(seed)}")
    ext = hashlib.shake_256(seed + bytes([params.k, params.l])).digest(128)
    rho, rho_prime, key = ext[:32], ext[32:96], ext[96:]
    a = _expand_a(rho, params.k, params.l)
    s1 = np.stack([_rej_bounded(rho_prime + bytes([r, 0]), params.eta) for r in range(params.l)])
    s2 = np.stack(
        [_rej_bounded(rho_prime + bytes([params.l + r, 0]), params.eta) for r in range(params.k)]
    )
    t = (_ntt_inv(_matvec(a, _ntt(s1))) + s2) % Q
    t1, t0 = _power2round(t)
    pk = _pk_encode(rho, t1)
    tr = hashlib.shake_256(pk).digest(64)
    sk = _sk_encode(params, rho, key, tr, s1, s2, t0 % Q)
    return pk, sk


def _message_rep(message: bytes, ctx: bytes) -> bytes:
    if len(ctx) > 255:
        raise ContextTooLong(f"context is {len(ctx)} bytes, max 255")
    return b"\x00" + bytes([len(ctx)]) + ctx + message


def sign(params: MlDsaParams, sk: bytes, message: bytes, ctx: bytes = b"",
         rnd: bytes | None = None) -> bytes:
    """Sign message under context; deterministic unless a 32-byte rnd is given."""
    if len(sk) != params.sk_len:
        raise BadKeyLength(f"{params.name} sk is {params.sk_len} bytes, got {len(sk)}")
    if rnd is None:
        rnd = bytes(SIGN_SEED_LEN)
    elif len(rnd) != SIGN_SEED_LEN:
        raise BadSeedLength(f"signing randomizer must be {SIGN_SEED_LEN} bytes")
    st = _sign_state(params.name, sk)
    mu = hashlib.shake_256(st["tr"] + _message_rep(message, ctx)).digest(64)
    rho_pp = hashlib.shake_256(st["key"] + rnd + mu).digest(64)

    kappa = 0
    while True:
        y = _expand_mask(rho_pp, kappa, params)
        kappa += params.l
        w = _ntt_inv(_matvec(st["a"], _ntt(y)))
        w1, _ = _decompose(w, params.gamma2)
        c_tilde = hashlib.shake_256(mu + _w1_encode(w1, params)).digest(params.lam // 4)
        c_hat = _ntt(_sample_in_ball(c_tilde, params.tau))
        z = (y + _ntt_inv(c_hat * st["s1_hat"] % Q)) % Q
        if _inf_norm(z) >= params.gamma1 - params.beta:
            continue
        w_cs2 = (w - _ntt_inv(c_hat * st["s2_hat"] % Q)) % Q
        _, r0 = _decompose(w_cs2, params.gamma2)
        if int(np.abs(r0).max()) >= params.gamma2 - params.beta:
            continue
        ct0 = _ntt_inv(c_hat * st["t0_hat"] % Q)
        if _inf_norm(ct0) >= params.gamma2:
            continue
        hints = (_decompose((w_cs2 + ct0) % Q, params.gamma2)[0]
                 != _decompose(w_cs2, params.gamma2)[0]).astype(np.int64)
        if int(hints.sum()) > params.omega:
            continue
        z_packed = b"".join(_pack_signed(z[i], params.gamma1, params.z_bits) for i in range(params.l))
        return c_tilde + z_packed + _pack_hints(hints, params.omega)


def verify(params: MlDsaParams, pk: bytes, message: bytes, signature: bytes,
           ctx: bytes = b"") -> bool:
    """True iff signature is valid for (message, ctx) under pk."""
    if len(pk) != params.pk_len:
        raise BadKeyLength(f"{params.name} pk is {params.pk_len} bytes, got {len(pk)}")
    if len(signature) != params.sig_len:
        return False
    nc = params.lam // 4
    c_tilde = signature[:nc]
    step = 32 * params.z_bits
    z = np.stack(
        [_unpack_signed(signature[nc + step * i : nc + step * (i + 1)], params.gamma1,
                        params.z_bits, N) for i in range(params.l)]
    )
    hints = _unpack_hints(signature[nc + step * params.l :], params.omega, params.k)
    if hints is None:
        return False
    if _inf_norm(z) >= params.gamma1 - params.beta:
        return False
    st = _verify_state(params.name, pk)
    mu = hashlib.shake_256(st["tr"] + _message_rep(message, ctx)).digest(64)
    c_hat = _ntt(_sample_in_ball(c_tilde, params.tau))
    w_approx = _ntt_inv((_matvec(st["a"], _ntt(z)) - c_hat * st["t1_hat"]) % Q)
    w1 = _use_hint(hints, w_approx, params.gamma2)
    return c_tilde == hashlib.shake_256(mu + _w1_encode(w1, params)).digest(params.lam // 4)
