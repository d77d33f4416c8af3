//! Truncated Fourier expansion of f0 over F0, evaluation of the differential
//! forms omega^beta and W_N(omega^beta), and termwise 4-limit double
//! integrals with cusp handling via the W_5 splitting.

use crate::eigendata::EigenTable;
use crate::nfq::{enumerate_ideals, CoefElem, F0Elem, Place};
use crate::{CoreError, Result};
use rug::float::Constant;
use rug::{Complex, Float};

/// v1(e) = sqrt2 - 1 and v2(e) = -sqrt2 - 1 for the fundamental unit e.
fn e1(prec: u32) -> Float {
    Float::with_val(prec, 2).sqrt() - 1
}

fn e2(prec: u32) -> Float {
    -Float::with_val(prec, 2).sqrt() - 1
}

const E1_F64: f64 = std::f64::consts::SQRT_2 - 1.0;
const E2_ABS_F64: f64 = std::f64::consts::SQRT_2 + 1.0;
/// v1(3 - 2*sqrt2), the totally positive fundamental unit at the first place.
const U1_F64: f64 = 3.0 - 2.0 * std::f64::consts::SQRT_2;
const TAU: f64 = std::f64::consts::TAU;

/// One expansion term: a_{(nu)d} * exp(2 pi i (v1(nu) z1 + v2(nu) z2)).
#[derive(Debug, Clone)]
pub struct Term {
    pub nu: F0Elem,
    pub coef: CoefElem,
    pub v1: Float,
    pub v2: Float,
    pub coefz: Complex,
    pub lv1: f64,
    pub lv2: f64,
}

/// Truncated expansion of f0, valid for evaluation points with
/// Im z1 >= y1_min and Im z2 >= y2_min.
#[derive(Debug, Clone)]
pub struct TermTable {
    pub terms: Vec<Term>,
    pub norm_bound: u64,
    pub unit_depth: i64,
    pub y1_min: f64,
    pub y2_min: f64,
    pub prec: u32,
}

impl TermTable {
    pub fn min_y_product(&self) -> f64 {
        self.y1_min * self.y2_min
    }

    /// Magnitude bound on the omitted ideal tail at the guaranteed minima:
    /// sum over norms beyond norm_bound of N * exp(-4 pi sqrt(N/8 * y1 y2)),
    /// the AM-GM bound with the divisor-crude coefficient bound |a_m| <= N.
    pub fn tail_bound(&self) -> f64 {
        let yy = self.min_y_product();
        let mut total = 0.0f64;
        let mut n = self.norm_bound as f64;
        // geometric-style majorization in sqrt(N) steps
        loop {
            let x = 4.0 * std::f64::consts::PI * (n / 8.0 * yy).sqrt();
            let block = 4.0 * n * n.sqrt() * (-x).exp();
            total += block;
            if block < total * 1e-30 || block == 0.0 {
                break;
            }
            n *= 2.0;
        }
        total
    }
}

/// Threshold on the term exponent 2 pi (v1 y1 + v2 y2) beyond which a term
/// is dropped as below 2^-(prec+16).
fn thresh(prec: u32) -> f64 {
    (prec as f64 + 16.0) * std::f64::consts::LN_2
}

fn plain_exp(lv1: f64, lv2: f64, y1: f64, y2: f64) -> f64 {
    TAU * (lv1 * y1 + lv2 * y2)
}

fn twist_exp(lv1: f64, lv2: f64, y1: f64, y2: f64) -> f64 {
    TAU * (lv1 * E1_F64 * y1 + lv2 * E2_ABS_F64 * y2)
}

/// Contiguous k-range of unit translates nu*u^k whose exponent function
/// g(k) = 2 pi (A u1^k y1 + B u1^-k y2) stays below the threshold.
fn unit_range(a: f64, b: f64, cap: f64) -> Option<(i64, i64)> {
    let g = |k: i64| {
        let w = U1_F64.powi(k as i32);
        TAU * (a * w + b / w)
    };
    // argmin of the convex exponent
    let kstar = (0.5 * (b / a).ln() / U1_F64.ln()).round() as i64;
    let mut k0 = kstar;
    // the rounded minimizer may sit one off; probe neighbours
    for k in [kstar - 1, kstar + 1] {
        if g(k) < g(k0) {
            k0 = k;
        }
    }
    if g(k0) > cap {
        return None;
    }
    let mut hi = k0;
    while hi - k0 < 400 && g(hi + 1) <= cap {
        hi += 1;
    }
    let mut lo = k0;
    while k0 - lo < 400 && g(lo - 1) <= cap {
        lo -= 1;
    }
    Some((lo, hi))
}

fn hull(r1: Option<(i64, i64)>, r2: Option<(i64, i64)>) -> Option<(i64, i64)> {
    match (r1, r2) {
        (Some((a, b)), Some((c, d))) => Some((a.min(c), b.max(d))),
        (x, None) => x,
        (None, y) => y,
    }
}

fn f0_f64(x: &F0Elem, place: Place) -> f64 {
    let s = match place {
        Place::V1 => std::f64::consts::SQRT_2,
        Place::V2 => -std::f64::consts::SQRT_2,
    };
    x.a.to_f64() + x.b.to_f64() * s
}

/// Build the truncated expansion with the symmetric minima split
/// y1 = y2 = sqrt(min_y_product).
pub fn build_expansion(
    table: &EigenTable,
    norm_bound: u64,
    min_y_product: f64,
    prec: u32,
) -> Result<TermTable> {
    let y = min_y_product.sqrt();
    build_expansion_with_minima(table, norm_bound, y, y, prec)
}

/// Build the truncated expansion guaranteed down to the individual minima
/// y1_min, y2_min of the integration endpoints.
pub fn build_expansion_with_minima(
    table: &EigenTable,
    norm_bound: u64,
    y1_min: f64,
    y2_min: f64,
    prec: u32,
) -> Result<TermTable> {
    if norm_bound > table.bound {
        return Err(CoreError::Expansion(format!(
            "norm_bound {norm_bound} exceeds eigenvalue table coverage {}",
            table.bound
        )));
    }
    if !(y1_min > 0.0 && y2_min > 0.0) {
        return Err(CoreError::Expansion("y-minima must be positive".into()));
    }
    let cap = thresh(prec);
    let d0 = F0Elem::d0();
    let u = F0Elem::unit_tp();
    let uinv = u.inv()?;
    let wprec = prec + 16;
    let mut terms: Vec<Term> = Vec::new();
    let mut unit_depth = 0i64;
    for e in enumerate_ideals(norm_bound)? {
        let coef = table.coefficient(&e.ideal)?.clone();
        let nu0 = e.ideal.generator().div(&d0)?;
        let a = f0_f64(&nu0, Place::V1);
        let b = f0_f64(&nu0, Place::V2);
        let range = hull(
            unit_range(a * y1_min, b * y2_min, cap),
            unit_range(a * E1_F64 * y1_min, b * E2_ABS_F64 * y2_min, cap),
        );
        let Some((lo, hi)) = range else { continue };
        unit_depth = unit_depth.max(hi.abs()).max(lo.abs());
        let mut nu = nu0.clone();
        for _ in 0..(-lo).max(0) {
            nu = nu.mul(&uinv);
        }
        for _ in 0..lo.max(0) {
            nu = nu.mul(&u);
        }
        for _k in lo..=hi {
            debug_assert!(nu.is_totally_positive());
            terms.push(Term {
                v1: nu.embed(Place::V1, wprec),
                v2: nu.embed(Place::V2, wprec),
                coefz: coef.embed(wprec),
                lv1: f0_f64(&nu, Place::V1),
                lv2: f0_f64(&nu, Place::V2),
                nu: nu.clone(),
                coef: coef.clone(),
            });
            nu = nu.mul(&u);
        }
    }
    terms.sort_by(|s, t| {
        plain_exp(s.lv1, s.lv2, y1_min, y2_min)
            .partial_cmp(&plain_exp(t.lv1, t.lv2, y1_min, y2_min))
            .unwrap()
    });
    Ok(TermTable {
        terms,
        norm_bound,
        unit_depth,
        y1_min,
        y2_min,
        prec,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    F0,
    F0Bar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Twist {
    Plain,
    EpsilonTwisted,
}

/// One weighted piece of a differential form: a variant of f0, an optional
/// epsilon-twist of the arguments, and an exact prefactor coef * pi^2/sqrt(8)
/// (the pi^2/sqrt8 factor applied only when pi_prefactor is set).
#[derive(Debug, Clone)]
pub struct FormSpec {
    pub variant: Variant,
    pub twist: Twist,
    pub coef: CoefElem,
    pub pi_prefactor: bool,
}

impl FormSpec {
    pub fn scale(&self, prec: u32) -> Complex {
        let mut s = self.coef.embed(prec);
        if self.pi_prefactor {
            let pi = Float::with_val(prec, Constant::Pi);
            let f = pi.square() / Float::with_val(prec, 8).sqrt();
            s *= f;
        }
        s
    }
}

/// The four weighted pieces of alpha^beta = omega^beta + W_N(omega^beta):
/// f0 plain and epsilon-twisted with prefactor -4 pi^2/sqrt8, and the
/// conjugate form pieces with prefactor -4 mu pi^2/sqrt8 where
/// mu = conj(lambda_N) is the Atkin-Lehner multiplier under the chosen
/// complex embedding of the coefficient field (the W_5 substitution maps the
/// f0 pieces onto mu times the conjugate pieces, which makes alpha exactly
/// W_5-invariant). The normalized flag additionally divides by 1 + mu.
pub fn alpha_form(lambda_n: &CoefElem, normalized: bool) -> Result<Vec<FormSpec>> {
    let mu = lambda_n.conj();
    let m4 = CoefElem::from_ints(-4, 0, 0, 0);
    let mut c_plain = m4.clone();
    let mut cbar_plain = m4.mul(&mu);
    if normalized {
        let inv = mu.add(&CoefElem::one()).inv()?;
        c_plain = c_plain.mul(&inv);
        cbar_plain = cbar_plain.mul(&inv);
    }
    let neg = |c: &CoefElem| CoefElem::zero().sub(c);
    Ok(vec![
        FormSpec { variant: Variant::F0, twist: Twist::Plain, coef: c_plain.clone(), pi_prefactor: true },
        FormSpec { variant: Variant::F0, twist: Twist::EpsilonTwisted, coef: neg(&c_plain), pi_prefactor: true },
        FormSpec { variant: Variant::F0Bar, twist: Twist::Plain, coef: cbar_plain.clone(), pi_prefactor: true },
        FormSpec { variant: Variant::F0Bar, twist: Twist::EpsilonTwisted, coef: neg(&cbar_plain), pi_prefactor: true },
    ])
}

fn check_point(table: &TermTable, y1: f64, y2: f64) -> Result<()> {
    if y1 <= 0.0 || y2 <= 0.0 {
        return Err(CoreError::Expansion(
            "evaluation point not in the upper half-plane".into(),
        ));
    }
    if y1 < table.y1_min * (1.0 - 1e-12) || y2 < table.y2_min * (1.0 - 1e-12) {
        return Err(CoreError::Expansion(format!(
            "evaluation point (y1={y1}, y2={y2}) below the min_y_product guarantee \
             (y1_min={}, y2_min={})",
            table.y1_min, table.y2_min
        )));
    }
    Ok(())
}

struct Kahan {
    sum: Complex,
    c: Complex,
}

impl Kahan {
    fn new(prec: u32) -> Self {
        Kahan { sum: Complex::new(prec), c: Complex::new(prec) }
    }

    fn add(&mut self, x: Complex) {
        let y = x - &self.c;
        let t = Complex::with_val(self.sum.prec().0, &self.sum + &y);
        self.c = Complex::with_val(self.sum.prec().0, &t - &self.sum) - y;
        self.sum = t;
    }
}

/// Value of the chosen variant/twist of f0 at (z1, z2) (no prefactor).
pub fn evaluate(
    form: &FormSpec,
    table: &TermTable,
    z1: &Complex,
    z2: &Complex,
    prec: u32,
) -> Result<Complex> {
    let y1 = z1.imag().to_f64();
    let y2 = z2.imag().to_f64();
    check_point(table, y1, y2)?;
    let wprec = prec + 16;
    let cap = thresh(prec);
    let i2pi = Complex::with_val(wprec, (0, 1)) * Float::with_val(wprec, Constant::Pi) * 2u32;
    // twisted arguments
    let (w1, w2, use_twist) = match form.twist {
        Twist::Plain => (Complex::with_val(wprec, z1), Complex::with_val(wprec, z2), false),
        Twist::EpsilonTwisted => (
            Complex::with_val(wprec, z1) * e1(wprec),
            Complex::with_val(wprec, z2).conj() * e2(wprec),
            true,
        ),
    };
    let mut acc = Kahan::new(wprec);
    for t in &table.terms {
        let ex = if use_twist {
            twist_exp(t.lv1, t.lv2, y1, y2)
        } else {
            plain_exp(t.lv1, t.lv2, y1, y2)
        };
        if ex > cap {
            continue;
        }
        let phase = Complex::with_val(wprec, &w1) * &t.v1 + Complex::with_val(wprec, &w2) * &t.v2;
        let e = (phase * &i2pi).exp();
        let a = match form.variant {
            Variant::F0 => Complex::with_val(wprec, &t.coefz),
            Variant::F0Bar => Complex::with_val(wprec, &t.coefz).conj(),
        };
        acc.add(a * e);
    }
    Ok(Complex::with_val(prec, acc.sum))
}

/// An integration limit: a point of the upper half-plane or the cusp at
/// i-infinity, where every termwise antiderivative vanishes.
#[derive(Debug, Clone)]
pub enum Limit {
    Infinity,
    Point(Complex),
}

impl Limit {
    pub fn point(re: f64, im: f64, prec: u32) -> Limit {
        Limit::Point(Complex::with_val(prec, (re, im)))
    }

    pub fn imag(&self) -> Option<f64> {
        match self {
            Limit::Infinity => None,
            Limit::Point(z) => Some(z.imag().to_f64()),
        }
    }
}

/// exp(2 pi i mu w) at the limit, with w the (possibly conjugated) variable.
fn exp_at(mu: &Float, lim: &Limit, conj_var: bool, i2pi: &Complex, wprec: u32) -> Complex {
    match lim {
        Limit::Infinity => Complex::new(wprec),
        Limit::Point(z) => {
            let w = if conj_var {
                Complex::with_val(wprec, z).conj()
            } else {
                Complex::with_val(wprec, z)
            };
            (w * mu * i2pi).exp()
        }
    }
}

/// Termwise antiderivative difference (exp(2 pi i mu_eff b) - exp(2 pi i
/// mu_eff a)) / (2 pi i mu_den). For the twisted piece mu_eff carries the
/// e_j substitution while mu_den does not (the d(e_j z_j) factor cancels it).
#[allow(clippy::too_many_arguments)]
fn antider(
    mu_eff: &Float,
    mu_den: &Float,
    a: &Limit,
    b: &Limit,
    conj_var: bool,
    i2pi: &Complex,
    wprec: u32,
) -> Complex {
    let eb = exp_at(mu_eff, b, conj_var, i2pi, wprec);
    let ea = exp_at(mu_eff, a, conj_var, i2pi, wprec);
    (eb - ea) / Complex::with_val(wprec, i2pi * mu_den)
}

fn limit_min_y(a: &Limit, b: &Limit) -> Result<Option<f64>> {
    let mut m: Option<f64> = None;
    for l in [a, b] {
        if let Some(y) = l.imag() {
            if y <= 0.0 {
                return Err(CoreError::Expansion(
                    "integration limit on or below the real axis (divergent); \
                     reach real cusps through cusp_split"
                        .into(),
                ));
            }
            m = Some(m.map_or(y, |c: f64| c.min(y)));
        }
    }
    Ok(m)
}

/// Termwise double integral of the form over outer limits (x1 -> x2) in z1
/// and inner limits (y1 -> y2) in z2, including the FormSpec prefactor.
pub fn double_integral(
    form: &FormSpec,
    table: &TermTable,
    x1: &Limit,
    x2: &Limit,
    y1: &Limit,
    y2: &Limit,
    prec: u32,
) -> Result<Complex> {
    let youter = limit_min_y(x1, x2)?;
    let yinner = limit_min_y(y1, y2)?;
    let wprec = prec + 32;
    let (Some(yo), Some(yi)) = (youter, yinner) else {
        // both limits of a variable at i-infinity: empty antiderivative
        return Ok(Complex::new(prec));
    };
    if yo < table.y1_min * (1.0 - 1e-12) || yi < table.y2_min * (1.0 - 1e-12) {
        return Err(CoreError::Expansion(format!(
            "integration limits (min y1={yo}, min y2={yi}) below the table guarantee \
             (y1_min={}, y2_min={})",
            table.y1_min, table.y2_min
        )));
    }
    let cap = thresh(prec);
    let i2pi = Complex::with_val(wprec, (0, 1)) * Float::with_val(wprec, Constant::Pi) * 2u32;
    let twisted = form.twist == Twist::EpsilonTwisted;
    let (e1v, e2v) = (e1(wprec), e2(wprec));
    let mut acc = Kahan::new(wprec);
    for t in &table.terms {
        let ex = if twisted {
            twist_exp(t.lv1, t.lv2, yo, yi)
        } else {
            plain_exp(t.lv1, t.lv2, yo, yi)
        };
        // magnitude bound includes the 1/(4 pi^2 v1 v2) denominators
        if ex + (t.lv1 * t.lv2).ln() + 2.0 * std::f64::consts::PI.ln() > cap {
            continue;
        }
        let (outer, inner) = if twisted {
            let m1 = Float::with_val(wprec, &t.v1 * &e1v);
            let m2 = Float::with_val(wprec, &t.v2 * &e2v);
            (
                antider(&m1, &t.v1, x1, x2, false, &i2pi, wprec),
                antider(&m2, &t.v2, y1, y2, true, &i2pi, wprec),
            )
        } else {
            (
                antider(&t.v1, &t.v1, x1, x2, false, &i2pi, wprec),
                antider(&t.v2, &t.v2, y1, y2, false, &i2pi, wprec),
            )
        };
        let a = match form.variant {
            Variant::F0 => Complex::with_val(wprec, &t.coefz),
            Variant::F0Bar => Complex::with_val(wprec, &t.coefz).conj(),
        };
        acc.add(a * outer * inner);
    }
    let out = acc.sum * form.scale(wprec);
    Ok(Complex::with_val(prec, out))
}

/// Sum of double_integral over all pieces of a form list (e.g. alpha^beta).
pub fn double_integral_sum(
    forms: &[FormSpec],
    table: &TermTable,
    x1: &Limit,
    x2: &Limit,
    y1: &Limit,
    y2: &Limit,
    prec: u32,
) -> Result<Complex> {
    let mut out = Complex::new(prec + 8);
    for f in forms {
        out += double_integral(f, table, x1, x2, y1, y2, prec + 8)?;
    }
    Ok(Complex::with_val(prec, out))
}

/// The cusps allowed as inner limits of a reduced 4-limit integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cusp {
    Zero,
    Infinity,
}

/// One piece produced by the W_5 cusp splitting.
#[derive(Debug, Clone)]
pub struct SplitPiece {
    pub sign: i32,
    pub outer: (Limit, Limit),
    pub inner: (Limit, Limit),
}

fn w5_outer(x: &Complex, prec: u32) -> Complex {
    -Complex::with_val(prec, x * 5u32).recip()
}

/// Split int_{x1}^{x2} int_0^infinity into two evaluable pieces via the W_5
/// identity: int_{-1/(5x1)}^{-1/(5x2)} int_{i infinity}^{i/sqrt5} plus
/// int_{x1}^{x2} int_{i/sqrt5}^{i infinity}. Reversed inner cusps negate.
pub fn cusp_split(
    x1: &Limit,
    x2: &Limit,
    inner: (Cusp, Cusp),
    prec: u32,
) -> Result<[SplitPiece; 2]> {
    let sign = match inner {
        (Cusp::Zero, Cusp::Infinity) => 1,
        (Cusp::Infinity, Cusp::Zero) => -1,
        _ => {
            return Err(CoreError::Expansion(
                "cusp_split requires inner limits {0, infinity}".into(),
            ))
        }
    };
    let (Limit::Point(p1), Limit::Point(p2)) = (x1, x2) else {
        return Err(CoreError::Expansion(
            "cusp_split outer limits must lie in the upper half-plane".into(),
        ));
    };
    if p1.imag().to_f64() <= 0.0 || p2.imag().to_f64() <= 0.0 {
        return Err(CoreError::Expansion(
            "cusp_split outer limits must lie in the upper half-plane".into(),
        ));
    }
    let anchor = Complex::with_val(prec, (0, 1)) / Float::with_val(prec, 5).sqrt();
    Ok([
        SplitPiece {
            sign,
            outer: (
                Limit::Point(w5_outer(p1, prec)),
                Limit::Point(w5_outer(p2, prec)),
            ),
            inner: (Limit::Infinity, Limit::Point(anchor.clone())),
        },
        SplitPiece {
            sign,
            outer: (x1.clone(), x2.clone()),
            inner: (Limit::Point(anchor), Limit::Infinity),
        },
    ])
}
