"""Plain-Python reference for ML-KEM (FIPS 203) and ML-DSA (FIPS 204).

Deliberately naive: integer lists, direct transcription of the standard's
pseudocode, no vectorization.  This file exists only to generate and
cross-check known-answer vectors; the installable package never imports it.
"""

import hashlib

# ---------------------------------------------------------------------------
# shared helpers


def bitrev(x, bits):
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


def bytes_to_bits(b):
    bits = []
    for byte in b:
        for j in range(8):
            bits.append((byte >> j) & 1)
    return bits


def bits_to_bytes(bits):
    assert len(bits) % 8 == 0
    out = bytearray(len(bits) // 8)
    for i, bit in enumerate(bits):
        out[i // 8] |= bit << (i % 8)
    return bytes(out)


def shake256(data, n):
    return hashlib.shake_256(data).digest(n)


def shake128(data, n):
    return hashlib.shake_128(data).digest(n)


# ===========================================================================
# ML-KEM (FIPS 203)

KYBER_Q = 3329
KYBER_PARAMS = {
    # name: (k, eta1, eta2, du, dv)
    "ML-KEM-512": (2, 3, 2, 10, 4),
    "ML-KEM-768": (3, 2, 2, 10, 4),
    "ML-KEM-1024": (4, 2, 2, 11, 5),
}

KYBER_ZETAS = [pow(17, bitrev(i, 7), KYBER_Q) for i in range(128)]
KYBER_GAMMAS = [pow(17, 2 * bitrev(i, 7) + 1, KYBER_Q) for i in range(128)]


def kyber_ntt(f):
    f = list(f)
    i = 1
    length = 128
    while length >= 2:
        for start in range(0, 256, 2 * length):
            z = KYBER_ZETAS[i]
            i += 1
            for j in range(start, start + length):
                t = z * f[j + length] % KYBER_Q
                f[j + length] = (f[j] - t) % KYBER_Q
                f[j] = (f[j] + t) % KYBER_Q
        length //= 2
    return f


def kyber_ntt_inv(f):
    f = list(f)
    i = 127
    length = 2
    while length <= 128:
        for start in range(0, 256, 2 * length):
            z = KYBER_ZETAS[i]
            i -= 1
            for j in range(start, start + length):
                t = f[j]
                f[j] = (t + f[j + length]) % KYBER_Q
                f[j + length] = z * (f[j + length] - t) % KYBER_Q
        length *= 2
    return [x * 3303 % KYBER_Q for x in f]  # 3303 = 128^-1 mod q


def kyber_mult_ntts(f, g):
    h = [0] * 256
    for i in range(128):
        f0, f1 = f[2 * i], f[2 * i + 1]
        g0, g1 = g[2 * i], g[2 * i + 1]
        h[2 * i] = (f0 * g0 + f1 * g1 % KYBER_Q * KYBER_GAMMAS[i]) % KYBER_Q
        h[2 * i + 1] = (f0 * g1 + f1 * g0) % KYBER_Q
    return h


def poly_add(a, b):
    return [(x + y) % KYBER_Q for x, y in zip(a, b)]


def poly_sub(a, b):
    return [(x - y) % KYBER_Q for x, y in zip(a, b)]


def sample_ntt(seed34):
    need = 1536
    while True:
        stream = shake128(seed34, need)
        a = []
        pos = 0
        while len(a) < 256 and pos + 3 <= len(stream):
            c0, c1, c2 = stream[pos], stream[pos + 1], stream[pos + 2]
            pos += 3
            d1 = c0 + 256 * (c1 % 16)
            d2 = c1 // 16 + 16 * c2
            if d1 < KYBER_Q:
                a.append(d1)
            if d2 < KYBER_Q and len(a) < 256:
                a.append(d2)
        if len(a) == 256:
            return a
        need *= 2


def sample_cbd(b, eta):
    bits = bytes_to_bits(b)
    f = []
    for i in range(256):
        x = sum(bits[2 * i * eta + j] for j in range(eta))
        y = sum(bits[2 * i * eta + eta + j] for j in range(eta))
        f.append((x - y) % KYBER_Q)
    return f


def byte_encode(f, d):
    bits = []
    for a in f:
        for j in range(d):
            bits.append((a >> j) & 1)
    return bits_to_bytes(bits)


def byte_decode(b, d):
    bits = bytes_to_bits(b)
    return [sum(bits[i * d + j] << j for j in range(d)) for i in range(256)]


def compress(f, d):
    return [((x << d) + 1664) // KYBER_Q % (1 << d) for x in f]


def decompress(f, d):
    return [(KYBER_Q * y + (1 << (d - 1))) >> d for y in f]


def kyber_prf(eta, s, b):
    return shake256(s + bytes([b]), 64 * eta)


def _expand_a(rho, k):
    return [[sample_ntt(rho + bytes([j, i])) for j in range(k)] for i in range(k)]


def kpke_keygen(d, k, eta1):
    g = hashlib.sha3_512(d + bytes([k])).digest()
    rho, sigma = g[:32], g[32:]
    a = _expand_a(rho, k)
    n = 0
    s = []
    for _ in range(k):
        s.append(sample_cbd(kyber_prf(eta1, sigma, n), eta1))
        n += 1
    e = []
    for _ in range(k):
        e.append(sample_cbd(kyber_prf(eta1, sigma, n), eta1))
        n += 1
    s_hat = [kyber_ntt(x) for x in s]
    e_hat = [kyber_ntt(x) for x in e]
    t_hat = []
    for i in range(k):
        acc = [0] * 256
        for j in range(k):
            acc = poly_add(acc, kyber_mult_ntts(a[i][j], s_hat[j]))
        t_hat.append(poly_add(acc, e_hat[i]))
    ek = b"".join(byte_encode(t, 12) for t in t_hat) + rho
    dk = b"".join(byte_encode(x, 12) for x in s_hat)
    return ek, dk


def kpke_encrypt(ek, m, r, k, eta1, eta2, du, dv):
    t_hat = [byte_decode(ek[384 * i : 384 * (i + 1)], 12) for i in range(k)]
    rho = ek[384 * k :]
    a = _expand_a(rho, k)
    n = 0
    y = []
    for _ in range(k):
        y.append(sample_cbd(kyber_prf(eta1, r, n), eta1))
        n += 1
    e1 = []
    for _ in range(k):
        e1.append(sample_cbd(kyber_prf(eta2, r, n), eta2))
        n += 1
    e2 = sample_cbd(kyber_prf(eta2, r, n), eta2)
    y_hat = [kyber_ntt(x) for x in y]
    u = []
    for i in range(k):
        acc = [0] * 256
        for j in range(k):
            acc = poly_add(acc, kyber_mult_ntts(a[j][i], y_hat[j]))  # A^T
        u.append(poly_add(kyber_ntt_inv(acc), e1[i]))
    mu = decompress(byte_decode(m, 1), 1)
    acc = [0] * 256
    for j in range(k):
        acc = poly_add(acc, kyber_mult_ntts(t_hat[j], y_hat[j]))
    v = poly_add(poly_add(kyber_ntt_inv(acc), e2), mu)
    c1 = b"".join(byte_encode(compress(p, du), du) for p in u)
    c2 = byte_encode(compress(v, dv), dv)
    return c1 + c2


def kpke_decrypt(dk, c, k, du, dv):
    c1, c2 = c[: 32 * du * k], c[32 * du * k :]
    u = [decompress(byte_decode(c1[32 * du * i : 32 * du * (i + 1)], du), du) for i in range(k)]
    v = decompress(byte_decode(c2, dv), dv)
    s_hat = [byte_decode(dk[384 * i : 384 * (i + 1)], 12) for i in range(k)]
    acc = [0] * 256
    for i in range(k):
        acc = poly_add(acc, kyber_mult_ntts(s_hat[i], kyber_ntt(u[i])))
    w = poly_sub(v, kyber_ntt_inv(acc))
    return byte_encode(compress(w, 1), 1)


def mlkem_keygen(name, seed64):
    k, eta1, _, _, _ = KYBER_PARAMS[name]
    d, z = seed64[:32], seed64[32:]
    ek, dk_pke = kpke_keygen(d, k, eta1)
    dk = dk_pke + ek + hashlib.sha3_256(ek).digest() + z
    return ek, dk


def mlkem_encaps(name, ek, m32):
    k, eta1, eta2, du, dv = KYBER_PARAMS[name]
    g = hashlib.sha3_512(m32 + hashlib.sha3_256(ek).digest()).digest()
    key, r = g[:32], g[32:]
    c = kpke_encrypt(ek, m32, r, k, eta1, eta2, du, dv)
    return c, key


def mlkem_decaps(name, dk, c):
    k, eta1, eta2, du, dv = KYBER_PARAMS[name]
    dk_pke = dk[: 384 * k]
    ek = dk[384 * k : 768 * k + 32]
    h = dk[768 * k + 32 : 768 * k + 64]
    z = dk[768 * k + 64 : 768 * k + 96]
    m = kpke_decrypt(dk_pke, c, k, du, dv)
    g = hashlib.sha3_512(m + h).digest()
    key, r = g[:32], g[32:]
    kbar = shake256(z + c, 32)
    c2 = kpke_encrypt(ek, m, r, k, eta1, eta2, du, dv)
    if c != c2:
        key = kbar
    return key


# ===========================================================================
# ML-DSA (FIPS 204)

DSA_Q = 8380417
DSA_D = 13
DSA_PARAMS = {
    # name: (tau, lambda, gamma1, gamma2, k, l, eta, omega)
    "ML-DSA-44": (39, 128, 1 << 17, (DSA_Q - 1) // 88, 4, 4, 2, 80),
    "ML-DSA-65": (49, 192, 1 << 19, (DSA_Q - 1) // 32, 6, 5, 4, 55),
    "ML-DSA-87": (60, 256, 1 << 19, (DSA_Q - 1) // 32, 8, 7, 2, 75),
}

DSA_ZETAS = [pow(1753, bitrev(m, 8), DSA_Q) for m in range(256)]
DSA_NINV = pow(256, DSA_Q - 2, DSA_Q)


def dsa_ntt(w):
    w = list(w)
    m = 0
    length = 128
    while length >= 1:
        for start in range(0, 256, 2 * length):
            m += 1
            z = DSA_ZETAS[m]
            for j in range(start, start + length):
                t = z * w[j + length] % DSA_Q
                w[j + length] = (w[j] - t) % DSA_Q
                w[j] = (w[j] + t) % DSA_Q
        length //= 2
    return w


def dsa_ntt_inv(w):
    w = list(w)
    m = 256
    length = 1
    while length < 256:
        for start in range(0, 256, 2 * length):
            m -= 1
            z = DSA_Q - DSA_ZETAS[m]
            for j in range(start, start + length):
                t = w[j]
                w[j] = (t + w[j + length]) % DSA_Q
                w[j + length] = z * (t - w[j + length] + DSA_Q) % DSA_Q
        length *= 2
    return [x * DSA_NINV % DSA_Q for x in w]


def dsa_mult(a, b):
    return [x * y % DSA_Q for x, y in zip(a, b)]


def dsa_add(a, b):
    return [(x + y) % DSA_Q for x, y in zip(a, b)]


def dsa_sub(a, b):
    return [(x - y) % DSA_Q for x, y in zip(a, b)]


def centered(x, m):
    x = x % m
    if x > m // 2:
        x -= m
    return x


def norm_inf(polys):
    return max(abs(centered(c, DSA_Q)) for p in polys for c in p)


def power2round(r):
    rp = r % DSA_Q
    r0 = centered(rp, 1 << DSA_D)
    return (rp - r0) >> DSA_D, r0


def decompose(r, gamma2):
    rp = r % DSA_Q
    r0 = centered(rp, 2 * gamma2)
    if rp - r0 == DSA_Q - 1:
        return 0, r0 - 1
    return (rp - r0) // (2 * gamma2), r0


def high_bits(r, gamma2):
    return decompose(r, gamma2)[0]


def low_bits(r, gamma2):
    return decompose(r, gamma2)[1]


def make_hint(z, r, gamma2):
    return int(high_bits(r, gamma2) != high_bits((r + z) % DSA_Q, gamma2))


def use_hint(h, r, gamma2):
    m = (DSA_Q - 1) // (2 * gamma2)
    r1, r0 = decompose(r, gamma2)
    if h == 1:
        return (r1 + 1) % m if r0 > 0 else (r1 - 1) % m
    return r1


def simple_bit_pack(w, b):
    bits = []
    nbits = b.bit_length()
    for a in w:
        for j in range(nbits):
            bits.append((a >> j) & 1)
    return bits_to_bytes(bits)


def simple_bit_unpack(v, b):
    nbits = b.bit_length()
    bits = bytes_to_bits(v)
    return [sum(bits[i * nbits + j] << j for j in range(nbits)) for i in range(256)]


def bit_pack(w, a, b):
    return simple_bit_pack([(b - x) % DSA_Q if x > b else b - x for x in
                            (centered(c, DSA_Q) for c in w)], a + b)


def bit_unpack(v, a, b):
    return [(b - z) % DSA_Q for z in simple_bit_unpack(v, a + b)]


def hint_bit_pack(h, omega, k):
    y = bytearray(omega + k)
    index = 0
    for i in range(k):
        for j in range(256):
            if h[i][j] == 1:
                y[index] = j
                index += 1
        y[omega + i] = index
    return bytes(y)


def hint_bit_unpack(y, omega, k):
    h = [[0] * 256 for _ in range(k)]
    index = 0
    for i in range(k):
        if y[omega + i] < index or y[omega + i] > omega:
            return None
        first = index
        while index < y[omega + i]:
            if index > first and y[index - 1] >= y[index]:
                return None
            h[i][y[index]] = 1
            index += 1
    for j in range(index, omega):
        if y[j] != 0:
            return None
    return h


def sample_in_ball(rho, tau):
    c = [0] * 256
    stream = shake256(rho, 8 + 1024)
    signs = bytes_to_bits(stream[:8])
    k = 8
    pos = 0
    for i in range(256 - tau, 256):
        while stream[k] > i:
            k += 1
        j = stream[k]
        k += 1
        c[i] = c[j]
        c[j] = (1 if signs[pos] == 0 else DSA_Q - 1)
        pos += 1
    return c


def rej_ntt_poly(seed):
    need = 1024
    while True:
        stream = shake128(seed, need)
        a = []
        pos = 0
        while len(a) < 256 and pos + 3 <= len(stream):
            z = stream[pos] | (stream[pos + 1] << 8) | ((stream[pos + 2] & 0x7F) << 16)
            pos += 3
            if z < DSA_Q:
                a.append(z)
        if len(a) == 256:
            return a
        need *= 2


def _coeff_from_half_byte(b, eta):
    if eta == 2 and b < 15:
        return 2 - (b % 5)
    if eta == 4 and b < 9:
        return 4 - b
    return None


def rej_bounded_poly(seed, eta):
    need = 512
    while True:
        stream = shake256(seed, need)
        a = []
        pos = 0
        while len(a) < 256 and pos < len(stream):
            z0 = _coeff_from_half_byte(stream[pos] % 16, eta)
            z1 = _coeff_from_half_byte(stream[pos] // 16, eta)
            pos += 1
            if z0 is not None:
                a.append(z0 % DSA_Q)
            if z1 is not None and len(a) < 256:
                a.append(z1 % DSA_Q)
        if len(a) == 256:
            return a
        need *= 2


def dsa_expand_a(rho, k, l):
    return [[rej_ntt_poly(rho + bytes([s, r])) for s in range(l)] for r in range(k)]


def dsa_expand_s(rho_prime, k, l, eta):
    s1 = [rej_bounded_poly(rho_prime + bytes([r, 0]), eta) for r in range(l)]
    s2 = [rej_bounded_poly(rho_prime + bytes([l + r, 0]), eta) for r in range(k)]
    return s1, s2


def dsa_expand_mask(rho, mu, l, gamma1):
    c = 1 + (gamma1 - 1).bit_length()
    y = []
    for r in range(l):
        v = shake256(rho + bytes([(mu + r) & 0xFF, (mu + r) >> 8]), 32 * c)
        y.append(bit_unpack(v, gamma1 - 1, gamma1))
    return y


def w1_encode(w1, gamma2):
    b = (DSA_Q - 1) // (2 * gamma2) - 1
    return b"".join(simple_bit_pack(p, b) for p in w1)


def pk_encode(rho, t1, k):
    return rho + b"".join(simple_bit_pack(p, (1 << 10) - 1) for p in t1)


def pk_decode(pk, k):
    rho = pk[:32]
    t1 = [simple_bit_unpack(pk[32 + 320 * i : 32 + 320 * (i + 1)], (1 << 10) - 1) for i in range(k)]
    return rho, t1


def sk_encode(rho, key, tr, s1, s2, t0, eta):
    out = rho + key + tr
    out += b"".join(bit_pack(p, eta, eta) for p in s1)
    out += b"".join(bit_pack(p, eta, eta) for p in s2)
    out += b"".join(bit_pack(p, (1 << 12) - 1, 1 << 12) for p in t0)
    return out


def sk_decode(sk, k, l, eta):
    rho, key, tr = sk[:32], sk[32:64], sk[64:128]
    pos = 128
    step = 32 * (2 * eta).bit_length()
    s1 = []
    for _ in range(l):
        s1.append(bit_unpack(sk[pos : pos + step], eta, eta))
        pos += step
    s2 = []
    for _ in range(k):
        s2.append(bit_unpack(sk[pos : pos + step], eta, eta))
        pos += step
    t0 = []
    for _ in range(k):
        t0.append(bit_unpack(sk[pos : pos + 416], (1 << 12) - 1, 1 << 12))
        pos += 416
    return rho, key, tr, s1, s2, t0


def sig_encode(c_tilde, z, h, gamma1, omega, k):
    return c_tilde + b"".join(bit_pack(p, gamma1 - 1, gamma1) for p in z) + hint_bit_pack(h, omega, k)


def sig_decode(sigma, lam, gamma1, omega, k, l):
    nc = lam // 4
    c_tilde = sigma[:nc]
    step = 32 * (1 + (gamma1 - 1).bit_length())
    z = []
    pos = nc
    for _ in range(l):
        z.append(bit_unpack(sigma[pos : pos + step], gamma1 - 1, gamma1))
        pos += step
    h = hint_bit_unpack(sigma[pos:], omega, k)
    return c_tilde, z, h


def mldsa_keygen(name, xi):
    tau, lam, gamma1, gamma2, k, l, eta, omega = DSA_PARAMS[name]
    ext = shake256(xi + bytes([k, l]), 128)
    rho, rho_prime, key = ext[:32], ext[32:96], ext[96:]
    a = dsa_expand_a(rho, k, l)
    s1, s2 = dsa_expand_s(rho_prime, k, l, eta)
    s1_hat = [dsa_ntt(p) for p in s1]
    t = []
    for r in range(k):
        acc = [0] * 256
        for s in range(l):
            acc = dsa_add(acc, dsa_mult(a[r][s], s1_hat[s]))
        t.append(dsa_add(dsa_ntt_inv(acc), s2[r]))
    t1 = []
    t0 = []
    for p in t:
        hi, lo = zip(*(power2round(c) for c in p))
        t1.append(list(hi))
        t0.append([x % DSA_Q for x in lo])
    pk = pk_encode(rho, t1, k)
    tr = shake256(pk, 64)
    sk = sk_encode(rho, key, tr, s1, s2, t0, eta)
    return pk, sk


def mldsa_sign_internal(name, sk, m_prime, rnd):
    tau, lam, gamma1, gamma2, k, l, eta, omega = DSA_PARAMS[name]
    beta = tau * eta
    rho, key, tr, s1, s2, t0 = sk_decode(sk, k, l, eta)
    a = dsa_expand_a(rho, k, l)
    s1_hat = [dsa_ntt(p) for p in s1]
    s2_hat = [dsa_ntt(p) for p in s2]
    t0_hat = [dsa_ntt(p) for p in t0]
    mu = shake256(tr + m_prime, 64)
    rho_pp = shake256(key + rnd + mu, 64)
    kappa = 0
    while True:
        y = dsa_expand_mask(rho_pp, kappa, l, gamma1)
        y_hat = [dsa_ntt(p) for p in y]
        w = []
        for r in range(k):
            acc = [0] * 256
            for s in range(l):
                acc = dsa_add(acc, dsa_mult(a[r][s], y_hat[s]))
            w.append(dsa_ntt_inv(acc))
        w1 = [[high_bits(c, gamma2) for c in p] for p in w]
        c_tilde = shake256(mu + w1_encode(w1, gamma2), lam // 4)
        c = sample_in_ball(c_tilde, tau)
        c_hat = dsa_ntt(c)
        cs1 = [dsa_ntt_inv(dsa_mult(c_hat, p)) for p in s1_hat]
        cs2 = [dsa_ntt_inv(dsa_mult(c_hat, p)) for p in s2_hat]
        z = [dsa_add(y[i], cs1[i]) for i in range(l)]
        r_sub = [dsa_sub(w[i], cs2[i]) for i in range(k)]
        r0 = [[low_bits(c2, gamma2) for c2 in p] for p in r_sub]
        kappa += l
        if norm_inf(z) >= gamma1 - beta or max(abs(c2) for p in r0 for c2 in p) >= gamma2 - beta:
            continue
        ct0 = [dsa_ntt_inv(dsa_mult(c_hat, p)) for p in t0_hat]
        h = []
        ones = 0
        for i in range(k):
            row = []
            for j in range(256):
                bit = make_hint(-centered(ct0[i][j], DSA_Q) % DSA_Q,
                                (r_sub[i][j] + ct0[i][j]) % DSA_Q, gamma2)
                row.append(bit)
                ones += bit
            h.append(row)
        if norm_inf(ct0) >= gamma2 or ones > omega:
            continue
        return sig_encode(c_tilde, z, h, gamma1, omega, k)


def mldsa_verify_internal(name, pk, m_prime, sigma):
    tau, lam, gamma1, gamma2, k, l, eta, omega = DSA_PARAMS[name]
    beta = tau * eta
    if len(sigma) != lam // 4 + l * 32 * (1 + (gamma1 - 1).bit_length()) + omega + k:
        return False
    rho, t1 = pk_decode(pk, k)
    c_tilde, z, h = sig_decode(sigma, lam, gamma1, omega, k, l)
    if h is None:
        return False
    if norm_inf(z) >= gamma1 - beta:
        return False
    a = dsa_expand_a(rho, k, l)
    tr = shake256(pk, 64)
    mu = shake256(tr + m_prime, 64)
    c = sample_in_ball(c_tilde, tau)
    c_hat = dsa_ntt(c)
    z_hat = [dsa_ntt(p) for p in z]
    t1_hat = [dsa_ntt([(x << DSA_D) % DSA_Q for x in p]) for p in t1]
    w1 = []
    for r in range(k):
        acc = [0] * 256
        for s in range(l):
            acc = dsa_add(acc, dsa_mult(a[r][s], z_hat[s]))
        acc = dsa_sub(acc, dsa_mult(c_hat, t1_hat[r]))
        w_approx = dsa_ntt_inv(acc)
        w1.append([use_hint(h[r][j], w_approx[j], gamma2) for j in range(256)])
    return c_tilde == shake256(mu + w1_encode(w1, gamma2), lam // 4)


def _m_prime(message, ctx):
    if len(ctx) > 255:
        raise ValueError("context too long")
    return b"\x00" + bytes([len(ctx)]) + ctx + message


def mldsa_sign(name, sk, message, ctx=b"", rnd=b"\x00" * 32):
    return mldsa_sign_internal(name, sk, _m_prime(message, ctx), rnd)


def mldsa_verify(name, pk, message, sigma, ctx=b""):
    return mldsa_verify_internal(name, pk, _m_prime(message, ctx), sigma)
