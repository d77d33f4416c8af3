#!/usr/bin/env python3
"""Generate the Hecke eigenvalue fixture for the seed newform.

The engine ingests eigenvalues c_p of the weight-2 newform of level 40 and
nebentypus the Kronecker character (10/.) as data.  This tool computes them
offline with classical modular symbols: weight-2 Manin symbols over P^1(Z/40)
with character, Hecke action through Heilbronn-Cremona matrices, eigenvalues
extracted by pairing a dual eigenvector against a single Manin symbol.

The coefficient field is Q(sqrt2, sqrt-3) with Q-basis {1, sqrt2, sqrt-3,
sqrt-6}.  For p coprime to 40 the inner twists force c_p onto a single line
m * theta with theta in that basis and m an integer, so a float pairing with
~1e-10 accuracy pins c_p exactly after rounding.  c_2 and c_5 are recovered
as full quadruples from the four conjugate eigensystems.

The Galois conjugate is pinned by c_5^2 = -1 + 2*sqrt(-6) together with
m > 0 at the first inert prime, and the output is cross-checked against
c_2 * c_2^{sigma tau} = -2 and the Ramanujan bound.

Usage: gen_eigendata.py --bound 160000 --out fixture.json
"""

import argparse
import json
import math
import sys
from fractions import Fraction
from math import gcd

import numpy as np
from numba import njit
from sympy import primerange, Matrix


def chi40(n):
    """Nebentypus (10/n) as a Dirichlet character mod 40.

    For odd n, (10/n) = (2/n)(5/n) with (2/n) given by n mod 8 and
    (5/n) = (n/5) by reciprocity.
    """
    if gcd(n, 40) != 1:
        return 0
    s2 = 1 if n % 8 in (1, 7) else -1
    s5 = 1 if n % 5 in (1, 4) else -1
    return s2 * s5


class ManinSpace:
    """Weight-2 Manin symbols for Gamma_0(N) with a quadratic character."""

    def __init__(self, N, chi):
        self.N = N
        self.chi = chi
        self.units = [u for u in range(N) if gcd(u, N) == 1]
        self._build_p1()
        self._build_relations()

    def _build_p1(self):
        N = self.N
        seen = {}
        reps = []
        # scal[(c,d)] = chi(lambda) relating (c,d) to its canonical rep,
        # or 0 when the stabilizer kills the symbol.
        scal = {}
        idx = {}
        for c in range(N):
            for d in range(N):
                if gcd(gcd(c, d), N) != 1:
                    continue
                if (c, d) in seen:
                    continue
                orbit = {}
                dead = False
                for lam in self.units:
                    key = ((lam * c) % N, (lam * d) % N)
                    s = self.chi(lam)
                    if key in orbit and orbit[key] != s:
                        dead = True
                    orbit[key] = s
                j = len(reps)
                reps.append((c, d))
                for key, s in orbit.items():
                    seen[key] = True
                    idx[key] = j
                    scal[key] = 0 if dead else s
        self.reps = reps
        self.index = idx
        self.scal = scal
        self.dim = len(reps)

    def symbol(self, c, d):
        """Index and coefficient of the Manin symbol (c:d); (-1, 0) if zero."""
        key = (c % self.N, d % self.N)
        if gcd(gcd(key[0], key[1]), self.N) != 1:
            return -1, 0
        return self.index[key], self.scal[key]

    def _build_relations(self):
        rows = []
        for j, (c, d) in enumerate(self.reps):
            # x + xS = 0 with S = [0,-1;1,0]
            r = [0] * self.dim
            r[j] += 1
            k, s = self.symbol(d, -c)
            if k >= 0:
                r[k] += s
            rows.append(r)
            # x + xT + xT^2 = 0 with T = [0,-1;1,-1]
            r = [0] * self.dim
            r[j] += 1
            k, s = self.symbol(d, -c - d)
            if k >= 0:
                r[k] += s
            k, s = self.symbol(-c - d, c)
            if k >= 0:
                r[k] += s
            rows.append(r)
        M = Matrix(rows)
        ns = M.nullspace()
        B = np.zeros((self.dim, len(ns)))
        for j, v in enumerate(ns):
            for i in range(self.dim):
                B[i, j] = float(v[i])
        self.dual_basis = B  # columns span functionals on the quotient

    def heilbronn(self, p):
        """Heilbronn-Cremona matrices of determinant p (p prime)."""
        if p == 2:
            return [(1, 0, 0, 2), (2, 0, 0, 1), (2, 1, 0, 1), (1, 0, 1, 2)]
        mats = [(1, 0, 0, p)]
        for r in range(-(p // 2), p // 2 + 1):
            x1, x2, y1, y2 = p, -r, 0, 1
            a, b = -p, r
            mats.append((x1, x2, y1, y2))
            while b != 0:
                q = int(math.floor(a / b + 0.5))
                c = a - b * q
                a, b = -b, c
                x1, x2 = x2, q * x2 - x1
                y1, y2 = y2, q * y2 - y1
                mats.append((x1, x2, y1, y2))
        return mats

    def hecke_ambient(self, p):
        """Matrix of T_p on the ambient span of Manin symbols."""
        A = np.zeros((self.dim, self.dim))
        H = self.heilbronn(p)
        for j, (c, d) in enumerate(self.reps):
            for (x1, x2, y1, y2) in H:
                k, s = self.symbol(c * x1 + d * y1, c * x2 + d * y2)
                if k >= 0:
                    A[k, j] += s
        return A

    def dual_hecke(self, p):
        """T_p transposed, restricted to the dual (functional) space."""
        B = self.dual_basis
        AtB = self.hecke_ambient(p).T @ B
        C, *_ = np.linalg.lstsq(B, AtB, rcond=None)
        return C


@njit(cache=True)
def _pair_tp(p, c0, d0, N, wre, wim):
    """Pair the dual eigenvector table against T_p applied to one symbol."""
    acc_re = 0.0
    acc_im = 0.0
    u = c0 % N
    v = (d0 * p) % N
    acc_re += wre[u, v]
    acc_im += wim[u, v]
    half = p // 2
    for r in range(-half, half + 1):
        x1 = p
        x2 = -r
        y1 = 0
        y2 = 1
        a = -p
        b = r
        u = (c0 * x1 + d0 * y1) % N
        v = (c0 * x2 + d0 * y2) % N
        acc_re += wre[u, v]
        acc_im += wim[u, v]
        while b != 0:
            q = int(math.floor(a / b + 0.5))
            c = a - b * q
            a = -b
            b = c
            x3 = q * x2 - x1
            x1 = x2
            x2 = x3
            y3 = q * y2 - y1
            y1 = y2
            y2 = y3
            u = (c0 * x1 + d0 * y1) % N
            v = (c0 * x2 + d0 * y2) % N
            acc_re += wre[u, v]
            acc_im += wim[u, v]
    return acc_re, acc_im


class EigenSystem:
    """One system of Hecke eigenvalues, evaluated through a dual eigenvector."""

    def __init__(self, space, w):
        self.space = space
        N = space.N
        self.N = N
        j0 = int(np.argmax(np.abs(w)))
        self.c0, self.d0 = space.reps[j0]
        self.den = w[j0]
        wre = np.zeros((N, N))
        wim = np.zeros((N, N))
        for u in range(N):
            for v in range(N):
                k, s = space.symbol(u, v)
                if k >= 0 and s != 0:
                    wre[u, v] = s * w[k].real
                    wim[u, v] = s * w[k].imag
        self.wre = wre
        self.wim = wim

    def ap(self, p):
        if p == 2:
            acc = 0.0
            for (x1, x2, y1, y2) in self.space.heilbronn(2):
                u = (self.c0 * x1 + self.d0 * y1) % self.N
                v = (self.c0 * x2 + self.d0 * y2) % self.N
                acc += complex(self.wre[u, v], self.wim[u, v])
            return acc / self.den
        re, im = _pair_tp(p, self.c0, self.d0, self.N, self.wre, self.wim)
        return complex(re, im) / self.den


def dual_eigensystems(space, probes=(3, 7)):
    """All one-dimensional dual eigensystems of the Hecke action."""
    C = sum((1.0 + 0.61803398875 * i) * space.dual_hecke(p)
            for i, p in enumerate(probes))
    vals, vecs = np.linalg.eig(C)
    out = []
    for j in range(len(vals)):
        w = space.dual_basis @ vecs[:, j]
        out.append(EigenSystem(space, w))
    return out


def self_test_level_11():
    """Machinery check: the level-11 newform (curve 11a) has known a_p."""
    space = ManinSpace(11, lambda n: 1 if gcd(n, 11) == 1 else 0)
    known = {2: -2, 3: -1, 5: 1, 7: -2, 11: 1, 13: 4, 17: -2, 19: 0,
             101: 2, 1009: -10, 1999: -20}
    systems = dual_eigensystems(space, probes=(2, 3))
    for s in systems:
        a2 = s.ap(2)
        if abs(a2 - (-2)) < 1e-8:
            for p, ap in known.items():
                got = s.ap(p)
                assert abs(got - ap) < 1e-7, (p, got, ap)
            return
    raise AssertionError("level-11 eigensystem not found")


SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)
# Embedding used throughout: sqrt2 -> +1.414.., sqrt-3 -> +i sqrt3,
# sqrt-6 -> +i sqrt6.
THETAS = {
    (1, 1): (complex(1.0, 0.0), (1, 0, 0, 0)),
    (1, -1): (complex(0.0, SQRT6), (0, 0, 0, 1)),
    (-1, 1): (complex(0.0, SQRT3), (0, 0, 1, 0)),
    (-1, -1): (complex(SQRT2, 0.0), (0, 1, 0, 0)),
}


def line_of(p):
    """(eps_2(p), eps_5(p)) for p coprime to 40."""
    s2 = 1 if p % 8 in (1, 7) else -1
    s5 = 1 if p % 5 in (1, 4) else -1
    return s2, s5


def embed(q):
    """Embed a quadruple over {1, sqrt2, sqrt-3, sqrt-6} into C."""
    return complex(float(q[0]) + float(q[1]) * SQRT2,
                   float(q[2]) * SQRT3 + float(q[3]) * SQRT6)


def recognize_line(c, p):
    """Round an eigenvalue known to lie on a single basis line."""
    theta_c, mask = THETAS[line_of(p)]
    m = c / theta_c
    mi = round(m.real)
    if abs(m - mi) > 0.02 or abs(mi) * abs(theta_c) > 2 * math.sqrt(p) + 0.5:
        raise AssertionError(f"eigenvalue at p={p} off-line: {c} -> {m}")
    return tuple(mi * x for x in mask)


def recognize_quadruple(vals):
    """Recover (q0,q1,q2,q3) from the four conjugate eigenvalues."""
    c, cs, ct, cst = vals
    q0 = (c + cs + ct + cst) / 4
    q1 = (c - cs + ct - cst) / (4 * SQRT2)
    q2 = (c + cs - ct - cst) / (4j * SQRT3)
    q3 = (c - cs - ct + cst) / (4j * SQRT6)
    out = []
    for q in (q0, q1, q2, q3):
        f = Fraction(q.real).limit_denominator(24)
        assert abs(complex(f) - q) < 1e-6, (q, f)
        out.append(f)
    return tuple(out)


def mul_quad(a, b):
    """Multiply quadruples in Q(sqrt2, sqrt-3) over {1,sqrt2,sqrt-3,sqrt-6}."""
    a0, a1, a2, a3 = a
    b0, b1, b2, b3 = b
    return (
        a0 * b0 + 2 * a1 * b1 - 3 * a2 * b2 - 6 * a3 * b3,
        a0 * b1 + a1 * b0 - 3 * a2 * b3 - 3 * a3 * b2,
        a0 * b2 + a2 * b0 + 2 * a1 * b3 + 2 * a3 * b1,
        a0 * b3 + a3 * b0 + a1 * b2 + a2 * b1,
    )


def find_newform(space):
    """Locate the pinned conjugate plus the sigma/tau/sigma-tau partners."""
    systems = dual_eigensystems(space)
    cusp = []
    for s in systems:
        try:
            good = all(abs(s.ap(p)) <= 2 * math.sqrt(p) + 1e-6
                       for p in (3, 7, 11, 13))
        except Exception:
            good = False
        if good:
            cusp.append(s)
    # Each system appears twice (plus/minus parts); keep one of each.
    distinct = []
    for s in cusp:
        key = tuple(s.ap(p) for p in (3, 7, 11, 13))
        if not any(all(abs(a - b) < 1e-6 for a, b in zip(key, k))
                   for k, _ in distinct):
            distinct.append((key, s))
    cusp = [s for _, s in distinct]
    if len(cusp) != 4:
        raise AssertionError(f"expected 4 cuspidal systems, got {len(cusp)}")
    target_c5sq = complex(-1.0, 2 * SQRT6)
    pinned = []
    for s in cusp:
        if abs(s.ap(5) ** 2 - target_c5sq) < 1e-6:
            pinned.append(s)
    if len(pinned) != 2:
        raise AssertionError("c_5^2 pin failed")
    # Between the two remaining conjugates (a sigma-tau pair) require m > 0
    # at the first inert prime with nonzero eigenvalue.
    main = None
    for s in pinned:
        for p in (3, 13, 19, 29):
            if line_of(p) != (-1, -1):
                continue
            m = s.ap(p).real / SQRT2
            if abs(m) > 0.5:
                if m > 0:
                    main = s
                break
    if main is None:
        raise AssertionError("sign pin at inert primes failed")
    # Label the other three by their sign pattern at p = 3, 7, 11.
    ref = {p: main.ap(p) for p in (3, 7, 11)}
    patterns = {
        (-1, -1, 1): "sigma",
        (1, -1, -1): "tau",
        (-1, 1, -1): "sigmatau",
    }
    labeled = {"id": main}
    for s in cusp:
        if s is main:
            continue
        sig = []
        for p in (3, 7, 11):
            v = s.ap(p)
            sig.append(1 if abs(v - ref[p]) < 1e-6 else -1)
            assert abs(v - ref[p]) < 1e-6 or abs(v + ref[p]) < 1e-6
        labeled[patterns[tuple(sig)]] = s
    assert len(labeled) == 4
    return labeled


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--bound", type=int, default=160000,
                    help="include split primes up to this bound")
    ap.add_argument("--small-bound", type=int, default=1000,
                    help="include all primes up to this bound")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    self_test_level_11()
    print("level-11 self test passed", flush=True)

    space = ManinSpace(40, chi40)
    print(f"P1(Z/40): {space.dim} classes, dual dim "
          f"{space.dual_basis.shape[1]}", flush=True)
    labeled = find_newform(space)
    main_sys = labeled["id"]

    coeffs = {}
    for p in (2, 5):
        vals = [labeled[k].ap(p)
                for k in ("id", "sigma", "tau", "sigmatau")]
        coeffs[p] = recognize_quadruple(vals)
    # Pinned-conjugate identities.
    c2, c5 = coeffs[2], coeffs[5]
    c2st = (c2[0], -c2[1], -c2[2], c2[3])
    assert mul_quad(c2, c2st) == (-2, 0, 0, 0), c2
    assert mul_quad(c5, c5) == (-1, 0, 0, 2), c5
    print(f"c_2 = {c2}, c_5 = {c5}", flush=True)

    todo = [p for p in primerange(3, args.small_bound + 1) if p != 5]
    todo += [p for p in primerange(args.small_bound + 1, args.bound + 1)
             if p % 8 in (1, 7)]
    n = len(todo)
    for i, p in enumerate(todo):
        coeffs[p] = recognize_line(main_sys.ap(p), p)
        if (i + 1) % 500 == 0:
            print(f"  {i + 1}/{n} primes (p = {p})", flush=True)

    out = {
        "level": 40,
        "nebentypus": "kronecker:10",
        "basis": ["1", "sqrt2", "sqrt-3", "sqrt-6"],
        "coeffs": {
            str(p): [str(Fraction(x)) for x in q]
            for p, q in sorted(coeffs.items())
        },
    }
    with open(args.out, "w") as f:
        json.dump(out, f, indent=0, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(coeffs)} primes to {args.out}", flush=True)


if __name__ == "__main__":
    main()
