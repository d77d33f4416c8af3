//! Exact arithmetic in F0 = Q(sqrt2): field elements, the coefficient field
//! Q(sqrt2, sqrt-3), ideals of Z[sqrt2] with canonical totally positive
//! generators, prime factorization, and the nebentypus character psi.

use crate::{CoreError, Result};
use rug::{Complex, Float, Integer, Rational};
use std::cmp::Ordering;
use std::fmt;

/// The two real places of F0: v1 sends sqrt2 to +1.414.., v2 to -1.414..
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Place {
    V1,
    V2,
}

/// Element a + b*sqrt2 of Q(sqrt2), exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct F0Elem {
    pub a: Rational,
    pub b: Rational,
}

impl F0Elem {
    pub fn new(a: Rational, b: Rational) -> Self {
        F0Elem { a, b }
    }

    pub fn from_ints(a: i64, b: i64) -> Self {
        F0Elem { a: Rational::from(a), b: Rational::from(b) }
    }

    pub fn zero() -> Self {
        Self::from_ints(0, 0)
    }

    pub fn one() -> Self {
        Self::from_ints(1, 0)
    }

    pub fn sqrt2() -> Self {
        Self::from_ints(0, 1)
    }

    /// Fundamental unit e = sqrt2 - 1 (norm -1).
    pub fn unit_e() -> Self {
        Self::from_ints(-1, 1)
    }

    /// Fundamental totally positive unit u = 3 - 2*sqrt2 = e^2.
    pub fn unit_tp() -> Self {
        Self::from_ints(3, -2)
    }

    /// Totally positive generator of the different, d0 = 4 - 2*sqrt2.
    pub fn d0() -> Self {
        Self::from_ints(4, -2)
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0 && self.b == 0
    }

    pub fn add(&self, o: &F0Elem) -> F0Elem {
        F0Elem::new(self.a.clone() + &o.a, self.b.clone() + &o.b)
    }

    pub fn sub(&self, o: &F0Elem) -> F0Elem {
        F0Elem::new(self.a.clone() - &o.a, self.b.clone() - &o.b)
    }

    pub fn neg(&self) -> F0Elem {
        F0Elem::new(-self.a.clone(), -self.b.clone())
    }

    pub fn mul(&self, o: &F0Elem) -> F0Elem {
        let a = self.a.clone() * &o.a + Rational::from(2) * self.b.clone() * &o.b;
        let b = self.a.clone() * &o.b + self.b.clone() * &o.a;
        F0Elem::new(a, b)
    }

    pub fn mul_rat(&self, r: &Rational) -> F0Elem {
        F0Elem::new(self.a.clone() * r, self.b.clone() * r)
    }

    /// Galois conjugate a - b*sqrt2.
    pub fn conj(&self) -> F0Elem {
        F0Elem::new(self.a.clone(), -self.b.clone())
    }

    /// Field norm a^2 - 2 b^2.
    pub fn norm(&self) -> Rational {
        self.a.clone() * &self.a - Rational::from(2) * self.b.clone() * &self.b
    }

    pub fn trace(&self) -> Rational {
        Rational::from(2) * self.a.clone()
    }

    pub fn inv(&self) -> Result<F0Elem> {
        let n = self.norm();
        if n == 0 {
            return Err(CoreError::Nfq("inverse of zero".into()));
        }
        Ok(self.conj().mul_rat(&(Rational::from(1) / n)))
    }

    pub fn div(&self, o: &F0Elem) -> Result<F0Elem> {
        Ok(self.mul(&o.inv()?))
    }

    /// True if both coordinates are integers, i.e. the element is in Z[sqrt2].
    pub fn is_integral(&self) -> bool {
        self.a.denom() == &1 && self.b.denom() == &1
    }

    /// Exact sign of the embedding at the given place, without floats.
    pub fn sign_at(&self, place: Place) -> i32 {
        // sign of a + s*b*sqrt2 with s = +-1
        let b = match place {
            Place::V1 => self.b.clone(),
            Place::V2 => -self.b.clone(),
        };
        let sa = self.a.cmp0() as i32;
        let sb = b.cmp0() as i32;
        if sa == sb || sb == 0 {
            return sa;
        }
        if sa == 0 {
            return sb;
        }
        // opposite signs: compare a^2 with 2 b^2
        let a2 = self.a.clone() * &self.a;
        let b2 = Rational::from(2) * b.clone() * &b;
        match a2.cmp(&b2) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => 0,
        }
    }

    pub fn is_totally_positive(&self) -> bool {
        self.sign_at(Place::V1) > 0 && self.sign_at(Place::V2) > 0
    }

    /// Embed at a real place to the requested binary precision.
    pub fn embed(&self, place: Place, prec: u32) -> Float {
        let s2 = Float::with_val(prec, 2).sqrt();
        let s2 = match place {
            Place::V1 => s2,
            Place::V2 => -s2,
        };
        Float::with_val(prec, &self.a) + Float::with_val(prec, &self.b) * s2
    }

    /// Parse expressions like "4*sqrt2+11", "-15/2+13/2*sqrt2", "-sqrt2-1".
    pub fn parse(s: &str) -> Result<F0Elem> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(CoreError::Parse("empty F0 element".into()));
        }
        let mut a = Rational::new();
        let mut b = Rational::new();
        // split into signed terms
        let mut terms: Vec<String> = Vec::new();
        let mut cur = String::new();
        for (i, c) in compact.chars().enumerate() {
            if (c == '+' || c == '-') && i > 0 && !cur.ends_with('/') {
                terms.push(cur.clone());
                cur.clear();
            }
            cur.push(c);
        }
        terms.push(cur);
        for t in terms {
            let (rest, is_s2) = if let Some(r) = t.strip_suffix("*sqrt2") {
                (r.to_string(), true)
            } else if let Some(r) = t.strip_suffix("sqrt2") {
                (r.to_string(), true)
            } else {
                (t.clone(), false)
            };
            let coef = match rest.as_str() {
                "" | "+" => Rational::from(1),
                "-" => Rational::from(-1),
                r => r
                    .parse::<Rational>()
                    .map_err(|_| CoreError::Parse(format!("bad term {t:?} in {s:?}")))?,
            };
            if is_s2 {
                b += coef;
            } else {
                a += coef;
            }
        }
        Ok(F0Elem::new(a, b))
    }
}

impl fmt::Display for F0Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b == 0 {
            return write!(f, "{}", self.a);
        }
        if self.a == 0 {
            return write!(f, "{}*sqrt2", self.b);
        }
        if self.b < 0 {
            write!(f, "{}{}*sqrt2", self.a, self.b)
        } else {
            write!(f, "{}+{}*sqrt2", self.a, self.b)
        }
    }
}

/// Element c0 + c1*sqrt2 + c2*sqrt-3 + c3*sqrt-6 of Q_f = Q(sqrt2, sqrt-3).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefElem {
    pub c0: Rational,
    pub c1: Rational,
    pub c2: Rational,
    pub c3: Rational,
}

impl CoefElem {
    pub fn new(c0: Rational, c1: Rational, c2: Rational, c3: Rational) -> Self {
        CoefElem { c0, c1, c2, c3 }
    }

    pub fn from_ints(c0: i64, c1: i64, c2: i64, c3: i64) -> Self {
        CoefElem {
            c0: Rational::from(c0),
            c1: Rational::from(c1),
            c2: Rational::from(c2),
            c3: Rational::from(c3),
        }
    }

    pub fn zero() -> Self {
        Self::from_ints(0, 0, 0, 0)
    }

    pub fn one() -> Self {
        Self::from_ints(1, 0, 0, 0)
    }

    pub fn from_rational(r: Rational) -> Self {
        CoefElem::new(r, Rational::new(), Rational::new(), Rational::new())
    }

    pub fn is_zero(&self) -> bool {
        self.c0 == 0 && self.c1 == 0 && self.c2 == 0 && self.c3 == 0
    }

    pub fn add(&self, o: &CoefElem) -> CoefElem {
        CoefElem::new(
            self.c0.clone() + &o.c0,
            self.c1.clone() + &o.c1,
            self.c2.clone() + &o.c2,
            self.c3.clone() + &o.c3,
        )
    }

    pub fn sub(&self, o: &CoefElem) -> CoefElem {
        CoefElem::new(
            self.c0.clone() - &o.c0,
            self.c1.clone() - &o.c1,
            self.c2.clone() - &o.c2,
            self.c3.clone() - &o.c3,
        )
    }

    /// Multiplication table: sqrt2*sqrt-3 = sqrt-6, sqrt2*sqrt-6 = 2 sqrt-3,
    /// sqrt-3*sqrt-6 = -3 sqrt2, (sqrt-3)^2 = -3, (sqrt-6)^2 = -6.
    pub fn mul(&self, o: &CoefElem) -> CoefElem {
        let (a0, a1, a2, a3) = (&self.c0, &self.c1, &self.c2, &self.c3);
        let (b0, b1, b2, b3) = (&o.c0, &o.c1, &o.c2, &o.c3);
        let two = Rational::from(2);
        let three = Rational::from(3);
        let six = Rational::from(6);
        let c0 = a0.clone() * b0 + two.clone() * a1.clone() * b1
            - three.clone() * a2.clone() * b2
            - six * a3.clone() * b3;
        let c1 = a0.clone() * b1 + a1.clone() * b0
            - three.clone() * a2.clone() * b3
            - three * a3.clone() * b2;
        let c2 = a0.clone() * b2 + a2.clone() * b0
            + two.clone() * a1.clone() * b3
            + two * a3.clone() * b1;
        let c3 = a0.clone() * b3 + a3.clone() * b0 + a1.clone() * b2 + a2.clone() * b1;
        CoefElem::new(c0, c1, c2, c3)
    }

    pub fn mul_rat(&self, r: &Rational) -> CoefElem {
        CoefElem::new(
            self.c0.clone() * r,
            self.c1.clone() * r,
            self.c2.clone() * r,
            self.c3.clone() * r,
        )
    }

    /// Inverse via the product of the three nontrivial Galois conjugates
    /// over the rational norm.
    pub fn inv(&self) -> Result<CoefElem> {
        let cofactor = self.conj().mul(&self.sigma_tau()).mul(&self.sigma_tau().conj());
        let nrm = self.mul(&cofactor);
        debug_assert!(nrm.c1 == 0 && nrm.c2 == 0 && nrm.c3 == 0);
        if nrm.c0 == 0 {
            return Err(CoreError::Nfq("inverse of zero".into()));
        }
        Ok(cofactor.mul_rat(&(Rational::from(1) / nrm.c0)))
    }

    /// Complex conjugation: fixes c0, c1, negates c2, c3.
    pub fn conj(&self) -> CoefElem {
        CoefElem::new(
            self.c0.clone(),
            self.c1.clone(),
            -self.c2.clone(),
            -self.c3.clone(),
        )
    }

    /// The inner-twist involution sigma*tau (fixes Q(sqrt-6)): negates c1, c2.
    pub fn sigma_tau(&self) -> CoefElem {
        CoefElem::new(
            self.c0.clone(),
            -self.c1.clone(),
            -self.c2.clone(),
            self.c3.clone(),
        )
    }

    /// Embed with sqrt2 -> +1.414.., sqrt-3 -> +i sqrt3, sqrt-6 -> +i sqrt6.
    pub fn embed(&self, prec: u32) -> Complex {
        let s2 = Float::with_val(prec, 2).sqrt();
        let s3 = Float::with_val(prec, 3).sqrt();
        let s6 = Float::with_val(prec, 6).sqrt();
        let re = Float::with_val(prec, &self.c0) + Float::with_val(prec, &self.c1) * s2;
        let im = Float::with_val(prec, &self.c2) * s3 + Float::with_val(prec, &self.c3) * s6;
        Complex::with_val(prec, (re, im))
    }
}

/// Integral ideal of Z[sqrt2], kept as a canonical totally positive generator
/// plus the Hermite-form Z-basis it spans.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IdealF0 {
    gen: F0Elem,
    norm: u64,
    /// Upper-triangular HNF rows [[h00, h01], [0, h11]] w.r.t. basis {1, sqrt2}.
    hnf: [Integer; 3],
}

impl IdealF0 {
    /// Build the ideal generated by g (nonzero, integral up to association).
    pub fn from_generator(g: &F0Elem) -> Result<IdealF0> {
        if g.is_zero() {
            return Err(CoreError::Nfq("zero ideal".into()));
        }
        if !g.is_integral() {
            return Err(CoreError::Nfq(format!("non-integral generator {g}")));
        }
        let gen = canonical_tp_generator(g);
        let n = gen.norm();
        debug_assert!(n.denom() == &1 && n > 0);
        let norm = n.numer().to_u64().ok_or_else(|| CoreError::Nfq("norm overflow".into()))?;
        let hnf = hnf_of_generator(&gen);
        Ok(IdealF0 { gen, norm, hnf })
    }

    pub fn unit_ideal() -> IdealF0 {
        IdealF0::from_generator(&F0Elem::one()).unwrap()
    }

    /// The canonical totally positive generator (log-balance normalized).
    pub fn generator(&self) -> &F0Elem {
        &self.gen
    }

    pub fn norm(&self) -> u64 {
        self.norm
    }

    pub fn hnf_basis(&self) -> &[Integer; 3] {
        &self.hnf
    }

    pub fn mul(&self, o: &IdealF0) -> IdealF0 {
        IdealF0::from_generator(&self.gen.mul(&o.gen)).unwrap()
    }

    pub fn conj(&self) -> IdealF0 {
        IdealF0::from_generator(&self.gen.conj()).unwrap()
    }

    pub fn pow(&self, k: u32) -> IdealF0 {
        let mut r = IdealF0::unit_ideal();
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }

    /// Stable sort/hash key.
    pub fn key(&self) -> (u64, String) {
        (self.norm, format!("{}", self.gen))
    }
}

/// HNF rows of the Z-module spanned by g and g*sqrt2 over {1, sqrt2}.
fn hnf_of_generator(g: &F0Elem) -> [Integer; 3] {
    let x = g.a.numer().clone();
    let y = g.b.numer().clone();
    // rows: (x, y) and (2y, x); reduce to [[h00, h01], [0, h11]]
    let (mut r1, mut r2) = ((x.clone(), y.clone()), (Integer::from(2) * &y, x));
    // euclidean elimination on the second coordinate
    while r2.1 != 0 {
        let q = Integer::from(&r1.1 / &r2.1);
        let new = (Integer::from(&r1.0 - Integer::from(&q * &r2.0)), Integer::from(&r1.1 - q * &r2.1));
        r1 = r2;
        r2 = new;
    }
    // r2 = (h, 0)-shape? we eliminated second coord of r2; r1 holds (h01-row)
    let (mut a0, a1) = (r2.0, Integer::from(0));
    let _ = a1;
    let (b0, b1) = r1;
    if a0 < 0 {
        a0 = -a0;
    }
    let (mut b0, mut b1) = (b0, b1);
    if b1 < 0 {
        b0 = -b0;
        b1 = -b1;
    }
    if a0 != 0 {
        let q = b0.clone().div_rem_floor(a0.clone()).0;
        b0 -= q * &a0;
    }
    // rows: (a0, 0) and (b0, b1) -> present as [[a0, 0],[b0, b1]] reordered to HNF
    [a0, b0, b1]
}

/// Canonical totally positive generator: fix the norm sign with the unit
/// e = sqrt2 - 1, make both embeddings positive, then balance with powers of
/// u = 3 - 2 sqrt2 so |log(v1/v2)| is minimal.
pub fn canonical_tp_generator(g: &F0Elem) -> F0Elem {
    let mut g = g.clone();
    if g.norm() < 0 {
        g = g.mul(&F0Elem::unit_e());
    }
    if g.sign_at(Place::V1) < 0 {
        g = g.neg();
    }
    debug_assert!(g.is_totally_positive());
    // balance: v1(g u^k) = v1(g) u1^k with u1 = v1(u) < 1 < v2(u) = 1/u1
    let prec = 96u32;
    let v1 = g.embed(Place::V1, prec);
    let v2 = g.embed(Place::V2, prec);
    let u1 = F0Elem::unit_tp().embed(Place::V1, prec);
    // minimize |log(v1/v2) + 2k log(u1)| over integers k
    let logratio = Float::with_val(prec, &v1 / &v2).ln();
    let logu = Float::with_val(prec, u1.ln() * 2u32);
    let kf = -(logratio.clone() / &logu);
    let k0 = kf
        .to_integer()
        .unwrap_or_else(|| Integer::from(0))
        .to_i64()
        .unwrap_or(0);
    let mut best: Option<(Float, i64)> = None;
    for k in (k0 - 2)..=(k0 + 2) {
        let val = Float::with_val(prec, &logratio + Float::with_val(prec, &logu) * Float::with_val(prec, k));
        let mag = val.abs();
        let better = match &best {
            None => true,
            Some((m, bk)) => {
                mag.clone() - m.clone() < Float::with_val(prec, -1e-20)
                    || ((mag.clone() - m.clone()).abs() < 1e-20 && k > *bk)
            }
        };
        if better {
            best = Some((mag, k));
        }
    }
    let k = best.unwrap().1;
    let u = F0Elem::unit_tp();
    let mut out = g;
    if k >= 0 {
        for _ in 0..k {
            out = out.mul(&u);
        }
    } else {
        let uinv = u.inv().unwrap(); // 3 + 2 sqrt2
        for _ in 0..(-k) {
            out = out.mul(&uinv);
        }
    }
    out
}

/// Splitting of a rational prime in Z[sqrt2].
#[derive(Debug, Clone)]
pub enum Splitting {
    Split(IdealF0, IdealF0),
    Inert(IdealF0),
    Ramified(IdealF0),
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    // deterministic Miller-Rabin for 64-bit
    let d = n - 1;
    let s = d.trailing_zeros();
    let d = d >> s;
    'wit: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a % n, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'wit;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    r
}

/// Tonelli-Shanks square root of a mod odd prime p; None if non-residue.
pub fn sqrt_mod(a: u64, p: u64) -> Option<u64> {
    let a = a % p;
    if a == 0 {
        return Some(0);
    }
    if pow_mod(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    if p % 4 == 3 {
        return Some(pow_mod(a, (p + 1) / 4, p));
    }
    // general case
    let mut q = p - 1;
    let mut s = 0u32;
    while q % 2 == 0 {
        q /= 2;
        s += 1;
    }
    let mut z = 2u64;
    while pow_mod(z, (p - 1) / 2, p) == 1 {
        z += 1;
    }
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(a, q, p);
    let mut r = pow_mod(a, (q + 1) / 2, p);
    while t != 1 {
        let mut i = 0u32;
        let mut tt = t;
        while tt != 1 {
            tt = mul_mod(tt, tt, p);
            i += 1;
        }
        let b = pow_mod(c, 1u64 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r)
}

/// Factor a rational prime: split iff p = +-1 mod 8, inert iff +-3, ramified at 2.
pub fn factor_rational_prime(p: u64) -> Result<Splitting> {
    if !is_prime_u64(p) {
        return Err(CoreError::Nfq(format!("{p} is not prime")));
    }
    if p == 2 {
        return Ok(Splitting::Ramified(IdealF0::from_generator(&F0Elem::sqrt2())?));
    }
    match p % 8 {
        1 | 7 => {
            let b = sqrt_mod(2, p).ok_or_else(|| {
                CoreError::Nfq(format!("2 unexpectedly a non-residue mod {p}"))
            })?;
            let g = split_prime_generator(p, b)?;
            let i1 = IdealF0::from_generator(&g)?;
            let i2 = i1.conj();
            debug_assert_eq!(i1.norm(), p);
            debug_assert_ne!(i1, i2);
            Ok(Splitting::Split(i1, i2))
        }
        3 | 5 => Ok(Splitting::Inert(IdealF0::from_generator(&F0Elem::from_ints(
            p as i64, 0,
        ))?)),
        _ => unreachable!(),
    }
}

/// Shortest vector of the rank-2 lattice (p, sqrt2 - b) under the Minkowski
/// quadratic form 2a^2 + 4b^2; for Z[sqrt2] this realizes an element of norm
/// +-p generating the prime above p.
fn split_prime_generator(p: u64, b: u64) -> Result<F0Elem> {
    type V = (Integer, Integer);
    let q = |v: &V| Integer::from(2) * Integer::from(&v.0 * &v.0) + Integer::from(4) * Integer::from(&v.1 * &v.1);
    let bl = |v: &V, w: &V| Integer::from(2) * Integer::from(&v.0 * &w.0) + Integer::from(4) * Integer::from(&v.1 * &w.1);
    let mut v1: V = (Integer::from(p), Integer::from(0));
    let mut v2: V = (Integer::from(b), Integer::from(1));
    loop {
        if q(&v1) > q(&v2) {
            std::mem::swap(&mut v1, &mut v2);
        }
        let num = bl(&v1, &v2);
        let den = q(&v1);
        // nearest integer to num/den
        let mu = Rational::from((num, den));
        let mut m = mu.clone().floor().numer().clone();
        if mu - Rational::from(&m) > Rational::from((1, 2)) {
            m += 1;
        }
        if m == 0 {
            break;
        }
        v2 = (
            Integer::from(&v2.0 - Integer::from(&m * &v1.0)),
            Integer::from(&v2.1 - Integer::from(&m * &v1.1)),
        );
    }
    let g = F0Elem::new(Rational::from(v1.0), Rational::from(v1.1));
    let n = g.norm();
    let pa = Rational::from(p);
    if n.clone().abs() != pa {
        return Err(CoreError::Nfq(format!(
            "short vector has norm {n}, expected +-{p}"
        )));
    }
    Ok(g)
}

/// An enumerated ideal with its prime factorization (for Hecke recursion).
#[derive(Debug, Clone)]
pub struct EnumeratedIdeal {
    pub ideal: IdealF0,
    pub factors: Vec<(IdealF0, u32)>,
}

/// All integral ideals of norm <= bound with factorizations, sorted by norm.
pub fn enumerate_ideals(bound: u64) -> Result<Vec<EnumeratedIdeal>> {
    let mut prime_ideals: Vec<IdealF0> = Vec::new();
    let mut p = 2u64;
    while p <= bound {
        if is_prime_u64(p) {
            match factor_rational_prime(p)? {
                Splitting::Split(a, b) => {
                    prime_ideals.push(a);
                    prime_ideals.push(b);
                }
                Splitting::Inert(i) => {
                    if i.norm() <= bound {
                        prime_ideals.push(i);
                    }
                }
                Splitting::Ramified(r) => prime_ideals.push(r),
            }
        }
        p += 1;
    }
    let mut out: Vec<EnumeratedIdeal> = Vec::new();
    let mut stack: Vec<(usize, IdealF0, Vec<(IdealF0, u32)>)> =
        vec![(0, IdealF0::unit_ideal(), Vec::new())];
    while let Some((i, ideal, factors)) = stack.pop() {
        if i == prime_ideals.len() {
            out.push(EnumeratedIdeal { ideal, factors });
            continue;
        }
        let pi = &prime_ideals[i];
        let mut cur = ideal.clone();
        let mut k = 0u32;
        loop {
            let mut f = factors.clone();
            if k > 0 {
                f.push((pi.clone(), k));
            }
            stack.push((i + 1, cur.clone(), f));
            k += 1;
            let next_norm = cur.norm().checked_mul(pi.norm());
            match next_norm {
                Some(n) if n <= bound => cur = cur.mul(pi),
                _ => break,
            }
        }
    }
    out.sort_by(|x, y| x.ideal.key().cmp(&y.ideal.key()));
    out.dedup_by(|x, y| x.ideal == y.ideal);
    Ok(out)
}

/// Totally positive generator of an ideal (the canonical representative).
pub fn totally_positive_generator(i: &IdealF0) -> F0Elem {
    i.generator().clone()
}

/// Kronecker symbol (a/n) for n > 0.
pub fn kronecker(a: i64, n: u64) -> i32 {
    if n == 0 {
        return if a == 1 || a == -1 { 1 } else { 0 };
    }
    let mut a = a;
    let mut n = n;
    let mut result = 1i32;
    // factor out 2s from n
    let mut t2 = 0u32;
    while n % 2 == 0 {
        n /= 2;
        t2 += 1;
    }
    if t2 > 0 {
        if a % 2 == 0 {
            return 0;
        }
        let am8 = a.rem_euclid(8);
        let s2 = if am8 == 1 || am8 == 7 { 1 } else { -1 };
        if t2 % 2 == 1 {
            result *= s2;
        }
    }
    // now n odd: Jacobi symbol
    a = a.rem_euclid(n as i64);
    let mut aa = a as u64;
    let mut nn = n;
    while aa != 0 {
        while aa % 2 == 0 {
            aa /= 2;
            let nm8 = nn % 8;
            if nm8 == 3 || nm8 == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut aa, &mut nn);
        if aa % 4 == 3 && nn % 4 == 3 {
            result = -result;
        }
        aa %= nn;
    }
    if nn == 1 {
        result
    } else {
        0
    }
}

/// The nebentypus character psi of conductor (5), cutting out F = F0(sqrt5):
/// psi(p) = Legendre(N(p) mod 5) away from (5), 0 at (5).
///
/// (The quadratic character of the residue field Z[sqrt2]/(5) = F_25 is
/// x -> Nm(x)^2 mod 5 and is trivial on totally positive units, so psi
/// factors through the ideal norm; this also gives the right value -1 at
/// the dyadic prime, where the naive residue-field square test degenerates.)
pub fn nebentypus_psi(p: &IdealF0) -> Result<i32> {
    if !is_prime_ideal(p) {
        return Err(CoreError::Nfq(format!(
            "psi of non-prime ideal of norm {}",
            p.norm()
        )));
    }
    if p.norm() % 5 == 0 {
        return Ok(0);
    }
    Ok(legendre5(p.norm()))
}

fn legendre5(n: u64) -> i32 {
    match n % 5 {
        1 | 4 => 1,
        2 | 3 => -1,
        _ => 0,
    }
}

/// Residue-field cross-check for odd primes away from (5): is 5 a square in
/// the residue field of p?
pub fn psi_residue_field_check(p: &IdealF0) -> Option<i32> {
    let n = p.norm();
    if n % 2 == 0 || n % 5 == 0 {
        return None;
    }
    if !is_prime_ideal(p) {
        return None;
    }
    let q = n; // residue field size (p or p^2)
    if q > u32::MAX as u64 {
        return None;
    }
    // 5 is a square in F_q iff 5^((q-1)/2) = 1; for q = p^2 compute mod p
    // using that F_p* c F_q* consists of squares iff exponent even.
    let rp = smallest_prime_factor(q);
    let is_sq = if q == rp {
        pow_mod(5 % rp, (rp - 1) / 2, rp) == 1
    } else {
        // q = p^2: every element of F_p is a square in F_{p^2}
        true
    };
    Some(if is_sq { 1 } else { -1 })
}

fn smallest_prime_factor(n: u64) -> u64 {
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return d;
        }
        d += 1;
    }
    n
}

fn is_prime_ideal(i: &IdealF0) -> bool {
    let n = i.norm();
    if is_prime_u64(n) {
        return true;
    }
    // inert primes have norm p^2 with p = +-3 mod 8 and rational generator
    let r = (n as f64).sqrt().round() as u64;
    r * r == n && is_prime_u64(r) && (r % 8 == 3 || r % 8 == 5) && i.generator().b == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn embed_examples() {
        let s2 = F0Elem::sqrt2();
        let v = s2.embed(Place::V1, 64).to_f64();
        assert!((v - 1.4142135623730951).abs() < 1e-15);
        let e = F0Elem::unit_e();
        let v = e.embed(Place::V2, 64).to_f64();
        assert!((v + 2.414213562373095).abs() < 1e-14);
        let lam = CoefElem::new(rat(-1, 5), rat(0, 1), rat(0, 1), rat(2, 5));
        let z = lam.embed(64);
        assert!((z.real().to_f64() + 0.2).abs() < 1e-15);
        assert!((z.imag().to_f64() - 0.9797958971132712).abs() < 1e-14);
    }

    #[test]
    fn norm_conj_trace() {
        let x = F0Elem::new(rat(3, 2), rat(-5, 7));
        assert_eq!(x.norm(), rat(3, 2) * rat(3, 2) - rat(2, 1) * rat(5, 7) * rat(5, 7));
        assert_eq!(x.conj().conj(), x);
        assert_eq!(x.trace(), rat(3, 1));
        let y = x.mul(&x.inv().unwrap());
        assert_eq!(y, F0Elem::one());
    }

    #[test]
    fn parse_roundtrip() {
        for s in ["4*sqrt2+11", "-15/2+13/2*sqrt2", "-sqrt2-1", "10", "sqrt2", "-27*sqrt2+37"] {
            let x = F0Elem::parse(s).unwrap();
            let y = F0Elem::parse(&format!("{x}")).unwrap();
            assert_eq!(x, y, "{s}");
        }
        assert_eq!(F0Elem::parse("4*sqrt2+11").unwrap(), F0Elem::from_ints(11, 4));
    }

    #[test]
    fn factor_examples() {
        match factor_rational_prime(7).unwrap() {
            Splitting::Split(a, b) => {
                assert_eq!(a.norm(), 7);
                assert_eq!(b.norm(), 7);
                assert_ne!(a, b);
            }
            _ => panic!("7 should split"),
        }
        match factor_rational_prime(3).unwrap() {
            Splitting::Inert(i) => assert_eq!(i.norm(), 9),
            _ => panic!("3 should be inert"),
        }
        match factor_rational_prime(2).unwrap() {
            Splitting::Ramified(r) => {
                assert_eq!(r.norm(), 2);
                let sq = r.mul(&r);
                assert_eq!(sq.norm(), 4);
            }
            _ => panic!("2 should ramify"),
        }
        assert!(factor_rational_prime(9).is_err());
    }

    #[test]
    fn tp_generator_examples() {
        let i3 = IdealF0::from_generator(&F0Elem::from_ints(3, 0)).unwrap();
        assert_eq!(totally_positive_generator(&i3), F0Elem::from_ints(3, 0));
        let is2 = IdealF0::from_generator(&F0Elem::sqrt2()).unwrap();
        assert_eq!(totally_positive_generator(&is2), F0Elem::from_ints(2, -1));
        let id0 = IdealF0::from_generator(&F0Elem::from_ints(0, 2)).unwrap();
        assert_eq!(totally_positive_generator(&id0), F0Elem::d0());
        assert_eq!(F0Elem::d0().norm(), rat(8, 1));
    }

    #[test]
    fn enumerate_small() {
        let ids = enumerate_ideals(10).unwrap();
        let mut norms: Vec<u64> = ids.iter().map(|e| e.ideal.norm()).collect();
        norms.sort();
        assert_eq!(norms, vec![1, 2, 4, 7, 7, 8, 9]);
    }

    #[test]
    fn enumerate_matches_brute_force() {
        // brute-force: elements a+b sqrt2 with |norm| <= B, dedup by associates
        let bound = 300i64;
        let mut gens: Vec<(u64, String)> = Vec::new();
        for a in -bound..=bound {
            for b in -bound..=bound {
                if a == 0 && b == 0 {
                    continue;
                }
                let n = a * a - 2 * b * b;
                if n != 0 && n.abs() <= bound {
                    let g = canonical_tp_generator(&F0Elem::from_ints(a, b));
                    let key = (n.unsigned_abs(), format!("{g}"));
                    gens.push(key);
                }
            }
        }
        gens.sort();
        gens.dedup();
        let ids = enumerate_ideals(bound as u64).unwrap();
        assert_eq!(gens.len(), ids.len());
        let keys: Vec<(u64, String)> = ids.iter().map(|e| e.ideal.key()).collect();
        assert_eq!(gens, keys);
    }

    #[test]
    fn psi_examples() {
        let s2 = IdealF0::from_generator(&F0Elem::sqrt2()).unwrap();
        assert_eq!(nebentypus_psi(&s2).unwrap(), -1);
        let five = IdealF0::from_generator(&F0Elem::from_ints(5, 0)).unwrap();
        assert_eq!(nebentypus_psi(&five).unwrap(), 0);
        if let Splitting::Split(p7, _) = factor_rational_prime(7).unwrap() {
            assert_eq!(nebentypus_psi(&p7).unwrap(), -1);
            assert_eq!(psi_residue_field_check(&p7), Some(-1));
            assert_eq!(kronecker(10, 7), -1);
        } else {
            panic!();
        }
    }

    #[test]
    fn psi_cross_checks() {
        // residue-field test and Kronecker symbol agree with psi
        for p in 3u64..200 {
            if !is_prime_u64(p) || p == 5 {
                continue;
            }
            match factor_rational_prime(p).unwrap() {
                Splitting::Split(a, _) => {
                    let psi = nebentypus_psi(&a).unwrap();
                    assert_eq!(psi, psi_residue_field_check(&a).unwrap(), "p={p}");
                    assert_eq!(psi, kronecker(10, p), "p={p}");
                }
                Splitting::Inert(i) => {
                    let psi = nebentypus_psi(&i).unwrap();
                    assert_eq!(psi, psi_residue_field_check(&i).unwrap(), "p={p}");
                    assert_eq!(psi, 1, "inert p={p}");
                }
                Splitting::Ramified(_) => {}
            }
        }
    }

    #[test]
    fn psi_multiplicative() {
        // psi(I J) with psi extended multiplicatively equals legendre5(N(IJ))
        let ids = enumerate_ideals(200).unwrap();
        for e in &ids {
            if e.ideal.norm() % 5 != 0 && e.ideal.norm() > 1 {
                let mut prod = 1i32;
                for (p, k) in &e.factors {
                    let v = nebentypus_psi(p).unwrap();
                    for _ in 0..*k {
                        prod *= v;
                    }
                }
                assert_eq!(prod, legendre5(e.ideal.norm()), "norm {}", e.ideal.norm());
            }
        }
    }

    #[test]
    fn hnf_determinant_is_norm() {
        for e in enumerate_ideals(100).unwrap() {
            let h = e.ideal.hnf_basis();
            let det = Integer::from(&h[0] * &h[2]);
            assert_eq!(det, Integer::from(e.ideal.norm()));
        }
    }

    #[test]
    fn coef_mul_table() {
        let s2 = CoefElem::from_ints(0, 1, 0, 0);
        let s3 = CoefElem::from_ints(0, 0, 1, 0);
        let s6 = CoefElem::from_ints(0, 0, 0, 1);
        assert_eq!(s2.mul(&s3), s6);
        assert_eq!(s2.mul(&s6), CoefElem::from_ints(0, 0, 2, 0));
        assert_eq!(s3.mul(&s6), CoefElem::from_ints(0, -3, 0, 0));
        assert_eq!(s3.mul(&s3), CoefElem::from_ints(-3, 0, 0, 0));
        assert_eq!(s6.mul(&s6), CoefElem::from_ints(-6, 0, 0, 0));
        // c_5 = -sqrt2 - sqrt-3 squares to -1 + 2 sqrt-6
        let c5 = CoefElem::from_ints(0, -1, -1, 0);
        assert_eq!(c5.mul(&c5), CoefElem::from_ints(-1, 0, 0, 2));
    }

    #[test]
    fn embedding_is_multiplicative() {
        let x = F0Elem::new(rat(3, 5), rat(-7, 2));
        let y = F0Elem::new(rat(-1, 3), rat(4, 9));
        for place in [Place::V1, Place::V2] {
            let lhs = x.mul(&y).embed(place, 128);
            let rhs = x.embed(place, 128) * y.embed(place, 128);
            let diff = (lhs - rhs).abs().to_f64();
            assert!(diff < 1e-30);
        }
        let n = x.norm();
        let prod = x.embed(Place::V1, 128) * x.embed(Place::V2, 128);
        assert!((prod - Float::with_val(128, &n)).abs().to_f64() < 1e-30);
    }
}
