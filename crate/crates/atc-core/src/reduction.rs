//! Formal rewrite engine for integral limits: turns the 3-limit integral
//! int^{z1} int_y^{gamma y} into a verified signed sum of 4-limit integrals
//! with cusp inner limits, via the four rewrite rules R1 (Gamma_psi
//! invariance), R2 (path split), R3 (merge), R4 (W_5 substitution).

use crate::hmfexp::{cusp_split, double_integral_sum, Cusp, FormSpec, Limit, TermTable};
use crate::nfq::{F0Elem, Place};
use crate::{CoreError, Result};
use rug::{Complex, Rational};
use serde::{Deserialize, Serialize};
use std::fmt;

/// 2x2 matrix over F0 acting as a Moebius transformation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mat2 {
    pub a: F0Elem,
    pub b: F0Elem,
    pub c: F0Elem,
    pub d: F0Elem,
}

impl Mat2 {
    pub fn new(a: F0Elem, b: F0Elem, c: F0Elem, d: F0Elem) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn from_ints(e: [(i64, i64); 4]) -> Self {
        let f = |t: (i64, i64)| F0Elem::from_ints(t.0, t.1);
        Mat2::new(f(e[0]), f(e[1]), f(e[2]), f(e[3]))
    }

    pub fn identity() -> Self {
        Mat2::from_ints([(1, 0), (0, 0), (0, 0), (1, 0)])
    }

    /// The W_5 involution z -> -1/(5z).
    pub fn w5() -> Self {
        Mat2::from_ints([(0, 0), (-1, 0), (5, 0), (0, 0)])
    }

    pub fn translation(t: &F0Elem) -> Self {
        Mat2::new(F0Elem::one(), t.clone(), F0Elem::zero(), F0Elem::one())
    }

    /// G = [[4 sqrt2 + 11, -3 sqrt2 + 5], [10, -6 sqrt2 + 9]].
    pub fn g() -> Self {
        Mat2::from_ints([(11, 4), (5, -3), (10, 0), (9, -6)])
    }

    /// H = [[-15 sqrt2 + 21, -sqrt2 - 1], [-35 sqrt2 + 50, 1]].
    pub fn h() -> Self {
        Mat2::from_ints([(21, -15), (-1, -1), (50, -35), (1, 0)])
    }

    /// gamma_phi = [[-27 sqrt2 + 37, 20 sqrt2 - 28], [-50 sqrt2 + 70, 37 sqrt2 - 53]].
    pub fn gamma_phi() -> Self {
        Mat2::from_ints([(37, -27), (-28, 20), (70, -50), (-53, 37)])
    }

    pub fn det(&self) -> F0Elem {
        self.a.mul(&self.d).sub(&self.b.mul(&self.c))
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a.mul(&o.a).add(&self.b.mul(&o.c)),
            self.a.mul(&o.b).add(&self.b.mul(&o.d)),
            self.c.mul(&o.a).add(&self.d.mul(&o.c)),
            self.c.mul(&o.b).add(&self.d.mul(&o.d)),
        )
    }

    /// Projective inverse (the adjugate).
    pub fn adjugate(&self) -> Mat2 {
        Mat2::new(self.d.clone(), self.b.neg(), self.c.neg(), self.a.clone())
    }

    /// Projective normalization: divide by the first nonzero entry.
    pub fn normalized(&self) -> Mat2 {
        for e in [&self.a, &self.b, &self.c, &self.d] {
            if !e.is_zero() {
                let inv = e.inv().unwrap();
                return Mat2::new(
                    self.a.mul(&inv),
                    self.b.mul(&inv),
                    self.c.mul(&inv),
                    self.d.mul(&inv),
                );
            }
        }
        self.clone()
    }

    pub fn apply_cusp(&self, q: &CuspPt) -> CuspPt {
        match q {
            CuspPt::Infinity => {
                if self.c.is_zero() {
                    CuspPt::Infinity
                } else {
                    CuspPt::Finite(self.a.div(&self.c).unwrap())
                }
            }
            CuspPt::Finite(x) => {
                let den = self.c.mul(x).add(&self.d);
                if den.is_zero() {
                    CuspPt::Infinity
                } else {
                    CuspPt::Finite(self.a.mul(x).add(&self.b).div(&den).unwrap())
                }
            }
        }
    }

    /// Moebius action on a complex point through the given real place.
    pub fn apply_complex(&self, z: &Complex, place: Place, prec: u32) -> Complex {
        let a = self.a.embed(place, prec);
        let b = self.b.embed(place, prec);
        let c = self.c.embed(place, prec);
        let d = self.d.embed(place, prec);
        let num = Complex::with_val(prec, z) * a + b;
        let den = Complex::with_val(prec, z) * c + d;
        num / den
    }

    pub fn entries_strings(&self) -> [String; 4] {
        [
            format!("{}", self.a),
            format!("{}", self.b),
            format!("{}", self.c),
            format!("{}", self.d),
        ]
    }

    pub fn parse(e: &[String; 4]) -> Result<Mat2> {
        Ok(Mat2::new(
            F0Elem::parse(&e[0])?,
            F0Elem::parse(&e[1])?,
            F0Elem::parse(&e[2])?,
            F0Elem::parse(&e[3])?,
        ))
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// A cusp of the upper half-plane: an element of F0 or infinity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CuspPt {
    Finite(F0Elem),
    Infinity,
}

impl fmt::Display for CuspPt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CuspPt::Finite(x) => write!(f, "{x}"),
            CuspPt::Infinity => write!(f, "inf"),
        }
    }
}

impl CuspPt {
    pub fn zero() -> Self {
        CuspPt::Finite(F0Elem::zero())
    }

    pub fn parse(s: &str) -> Result<CuspPt> {
        if s == "inf" {
            Ok(CuspPt::Infinity)
        } else {
            Ok(CuspPt::Finite(F0Elem::parse(s)?))
        }
    }
}

/// An integration limit in normal form: either a cusp, or a Moebius word
/// applied to the symbolic point z1.
#[derive(Debug, Clone)]
pub enum FormalLimit {
    Cusp(CuspPt),
    OfZ1(Mat2),
}

impl FormalLimit {
    pub fn z1() -> Self {
        FormalLimit::OfZ1(Mat2::identity())
    }

    pub fn normalized(&self) -> FormalLimit {
        match self {
            FormalLimit::Cusp(q) => FormalLimit::Cusp(q.clone()),
            FormalLimit::OfZ1(m) => FormalLimit::OfZ1(m.normalized()),
        }
    }

    pub fn transform(&self, m: &Mat2) -> FormalLimit {
        match self {
            FormalLimit::Cusp(q) => FormalLimit::Cusp(m.apply_cusp(q)),
            FormalLimit::OfZ1(w) => FormalLimit::OfZ1(m.mul(w)),
        }
    }
}

impl PartialEq for FormalLimit {
    fn eq(&self, o: &Self) -> bool {
        match (self.normalized(), o.normalized()) {
            (FormalLimit::Cusp(p), FormalLimit::Cusp(q)) => p == q,
            (FormalLimit::OfZ1(m), FormalLimit::OfZ1(n)) => m == n,
            _ => false,
        }
    }
}

impl fmt::Display for FormalLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormalLimit::Cusp(q) => write!(f, "{q}"),
            FormalLimit::OfZ1(m) => write!(f, "{m}.z1"),
        }
    }
}

/// A 3-limit (single upper outer limit) or 4-limit integral term.
#[derive(Debug, Clone, PartialEq)]
pub enum Integral {
    ThreeLimit {
        outer: FormalLimit,
        inner_from: FormalLimit,
        inner_to: FormalLimit,
    },
    FourLimit {
        outer_from: FormalLimit,
        outer_to: FormalLimit,
        inner_from: FormalLimit,
        inner_to: FormalLimit,
    },
}

/// Formal signed sum of integral terms; rewrite rules preserve its value.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSum {
    pub terms: Vec<(i32, Integral)>,
}

impl IntegralSum {
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        for (sg, t) in &self.terms {
            let part = match t {
                Integral::ThreeLimit { outer, inner_from, inner_to } => format!(
                    "{}[^{} {}..{}]",
                    sg,
                    outer.normalized(),
                    inner_from.normalized(),
                    inner_to.normalized()
                ),
                Integral::FourLimit { outer_from, outer_to, inner_from, inner_to } => format!(
                    "{}[{}..{} {}..{}]",
                    sg,
                    outer_from.normalized(),
                    outer_to.normalized(),
                    inner_from.normalized(),
                    inner_to.normalized()
                ),
            };
            s.push_str(&part);
            s.push(';');
        }
        s
    }

    fn drop_degenerate(&mut self) {
        self.terms.retain(|(_, t)| match t {
            Integral::ThreeLimit { inner_from, inner_to, .. } => inner_from != inner_to,
            Integral::FourLimit { outer_from, outer_to, inner_from, inner_to } => {
                outer_from != outer_to && inner_from != inner_to
            }
        });
    }

    pub fn all_reduced(&self) -> bool {
        self.terms.iter().all(|(_, t)| {
            matches!(
                t,
                Integral::FourLimit { inner_from, inner_to, .. }
                    if is_zero_or_inf(inner_from) && is_zero_or_inf(inner_to)
            )
        })
    }
}

fn is_zero_or_inf(l: &FormalLimit) -> bool {
    matches!(l, FormalLimit::Cusp(CuspPt::Infinity))
        || matches!(l, FormalLimit::Cusp(CuspPt::Finite(x)) if x.is_zero())
}

/// The starting 3-limit integral int^{z1} int_{anchor}^{gamma anchor}.
pub fn initial_sum(gamma: &Mat2, anchor: &CuspPt) -> IntegralSum {
    IntegralSum {
        terms: vec![(
            1,
            Integral::ThreeLimit {
                outer: FormalLimit::z1(),
                inner_from: FormalLimit::Cusp(anchor.clone()),
                inner_to: FormalLimit::Cusp(gamma.apply_cusp(anchor)),
            },
        )],
    }
}

/// Membership in Gamma_psi(N): integral entries, totally positive unit
/// determinant, lower-left entry in (5), and psi(upper-left mod 5) = 1,
/// where psi on (Z[sqrt2]/5)^x is +1 iff the norm is +-1 mod 5.
pub fn check_gamma_membership(m: &Mat2) -> Result<bool> {
    for e in [&m.a, &m.b, &m.c, &m.d] {
        if !e.is_integral() {
            return Err(CoreError::Nfq(format!("non-integral matrix entry {e}")));
        }
    }
    let det = m.det();
    if det.norm().abs() != Rational::from(1) || !det.is_totally_positive() {
        return Ok(false);
    }
    let five = Rational::from(5);
    let div5 = |x: &Rational| (x.clone() / &five).denom() == &1;
    if !div5(&m.c.a) || !div5(&m.c.b) {
        return Ok(false);
    }
    // psi of the upper-left residue class
    let n = m.a.norm();
    let r = n.numer().mod_u(5);
    Ok(r == 1 || r == 4)
}

/// One rewrite step of a ReductionScript.
#[derive(Debug, Clone)]
pub enum Step {
    /// Replace every limit L of the term by gamma^-1 L (Gamma_psi invariance).
    R1 { gamma: Mat2, term: usize },
    /// Split the inner path of the term at the cusp t.
    R2 { split: CuspPt, term: usize },
    /// Merge two 3-limit terms with matching inner limits into one 4-limit term.
    R3 { term: usize, other: usize },
    /// Apply the W_5 substitution z -> -1/(5z) to every limit of the term.
    R4 { term: usize },
}

/// JSON form of a step: rule tag plus exact F0-string arguments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptStep {
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[String; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub term: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ReductionScript {
    pub steps: Vec<Step>,
}

impl ReductionScript {
    pub fn to_json(&self) -> String {
        let raw: Vec<ScriptStep> = self
            .steps
            .iter()
            .map(|s| match s {
                Step::R1 { gamma, term } => ScriptStep {
                    rule: "R1".into(),
                    matrix: Some(gamma.entries_strings()),
                    split: None,
                    term: *term,
                    other: None,
                },
                Step::R2 { split, term } => ScriptStep {
                    rule: "R2".into(),
                    matrix: None,
                    split: Some(format!("{split}")),
                    term: *term,
                    other: None,
                },
                Step::R3 { term, other } => ScriptStep {
                    rule: "R3".into(),
                    matrix: None,
                    split: None,
                    term: *term,
                    other: Some(*other),
                },
                Step::R4 { term } => ScriptStep {
                    rule: "R4".into(),
                    matrix: None,
                    split: None,
                    term: *term,
                    other: None,
                },
            })
            .collect();
        serde_json::to_string_pretty(&raw).unwrap()
    }

    pub fn from_json(s: &str) -> Result<ReductionScript> {
        let raw: Vec<ScriptStep> =
            serde_json::from_str(s).map_err(|e| CoreError::Parse(format!("script json: {e}")))?;
        let mut steps = Vec::new();
        for r in raw {
            let step = match r.rule.as_str() {
                "R1" => Step::R1 {
                    gamma: Mat2::parse(
                        r.matrix
                            .as_ref()
                            .ok_or_else(|| CoreError::Parse("R1 without matrix".into()))?,
                    )?,
                    term: r.term,
                },
                "R2" => Step::R2 {
                    split: CuspPt::parse(
                        r.split
                            .as_deref()
                            .ok_or_else(|| CoreError::Parse("R2 without split point".into()))?,
                    )?,
                    term: r.term,
                },
                "R3" => Step::R3 {
                    term: r.term,
                    other: r
                        .other
                        .ok_or_else(|| CoreError::Parse("R3 without second term".into()))?,
                },
                "R4" => Step::R4 { term: r.term },
                x => return Err(CoreError::Parse(format!("unknown rule {x:?}"))),
            };
            steps.push(step);
        }
        Ok(ReductionScript { steps })
    }
}

fn reject(step: usize, reason: impl Into<String>) -> CoreError {
    CoreError::ScriptRejected { step, reason: reason.into() }
}

fn term_limits_mut(t: &mut Integral) -> Vec<&mut FormalLimit> {
    match t {
        Integral::ThreeLimit { outer, inner_from, inner_to } => {
            vec![outer, inner_from, inner_to]
        }
        Integral::FourLimit { outer_from, outer_to, inner_from, inner_to } => {
            vec![outer_from, outer_to, inner_from, inner_to]
        }
    }
}

/// Apply one rewrite step; `index` only labels error messages.
pub fn apply_rule(sum: &IntegralSum, step: &Step, index: usize) -> Result<IntegralSum> {
    let mut out = sum.clone();
    match step {
        Step::R1 { gamma, term } => {
            if !check_gamma_membership(gamma)? {
                return Err(reject(index, format!("matrix {gamma} not in Gamma_psi(N)")));
            }
            let t = out
                .terms
                .get_mut(*term)
                .ok_or_else(|| reject(index, "term index out of range"))?;
            let ginv = gamma.adjugate();
            for l in term_limits_mut(&mut t.1) {
                *l = l.transform(&ginv);
            }
        }
        Step::R2 { split, term } => {
            let (sign, t) = out
                .terms
                .get(*term)
                .cloned()
                .ok_or_else(|| reject(index, "term index out of range"))?;
            let mid = FormalLimit::Cusp(split.clone());
            match t {
                Integral::ThreeLimit { outer, inner_from, inner_to } => {
                    out.terms[*term] = (
                        sign,
                        Integral::ThreeLimit {
                            outer: outer.clone(),
                            inner_from,
                            inner_to: mid.clone(),
                        },
                    );
                    out.terms.push((
                        sign,
                        Integral::ThreeLimit { outer, inner_from: mid, inner_to },
                    ));
                }
                Integral::FourLimit { outer_from, outer_to, inner_from, inner_to } => {
                    out.terms[*term] = (
                        sign,
                        Integral::FourLimit {
                            outer_from: outer_from.clone(),
                            outer_to: outer_to.clone(),
                            inner_from,
                            inner_to: mid.clone(),
                        },
                    );
                    out.terms.push((
                        sign,
                        Integral::FourLimit { outer_from, outer_to, inner_from: mid, inner_to },
                    ));
                }
            }
        }
        Step::R3 { term, other } => {
            if term == other {
                return Err(reject(index, "R3 needs two distinct terms"));
            }
            let (sa, ta) = out
                .terms
                .get(*term)
                .cloned()
                .ok_or_else(|| reject(index, "term index out of range"))?;
            let (sb, tb) = out
                .terms
                .get(*other)
                .cloned()
                .ok_or_else(|| reject(index, "other term index out of range"))?;
            let (Integral::ThreeLimit { outer: oa, inner_from: fa, inner_to: la },
                 Integral::ThreeLimit { outer: ob, inner_from: fb, inner_to: lb }) = (ta, tb)
            else {
                return Err(reject(index, "R3 applies to two 3-limit terms"));
            };
            // orient the terms along a common inner path, flipping the one
            // whose orientation is canonically larger
            let key = |f: &FormalLimit, l: &FormalLimit| {
                format!("{}..{}", f.normalized(), l.normalized())
            };
            let (sa, sb, inner) = if fa == fb && la == lb {
                (sa, sb, (fa, la))
            } else if fa == lb && la == fb {
                if key(&fa, &la) <= key(&fb, &lb) {
                    (sa, -sb, (fa, la))
                } else {
                    (-sa, sb, (fb, lb))
                }
            } else {
                return Err(reject(index, "R3 inner limits do not match"));
            };
            if sa == sb {
                return Err(reject(index, "R3 requires opposite signs after orientation"));
            }
            // + int^{pos} - int^{neg} = int_{neg}^{pos}
            let (pos, neg) = if sa > 0 { (oa, ob) } else { (ob, oa) };
            let merged = (
                1,
                Integral::FourLimit {
                    outer_from: neg,
                    outer_to: pos,
                    inner_from: inner.0,
                    inner_to: inner.1,
                },
            );
            let (lo, hi) = (*term.min(other), *term.max(other));
            out.terms.remove(hi);
            out.terms[lo] = merged;
        }
        Step::R4 { term } => {
            let t = out
                .terms
                .get_mut(*term)
                .ok_or_else(|| reject(index, "term index out of range"))?;
            let w = Mat2::w5();
            for l in term_limits_mut(&mut t.1) {
                *l = l.transform(&w);
            }
        }
    }
    out.drop_degenerate();
    Ok(out)
}

pub fn run_script(initial: &IntegralSum, script: &ReductionScript) -> Result<IntegralSum> {
    let mut sum = initial.clone();
    for (i, step) in script.steps.iter().enumerate() {
        sum = apply_rule(&sum, step, i)?;
    }
    Ok(sum)
}

/// The builtin script reproducing the worked reduction of
/// int^{z1} int_infinity^{gamma_phi infinity} to the two-term 4-limit sum.
pub fn builtin_example_script() -> ReductionScript {
    let g0 = CuspPt::Finite(F0Elem::new(Rational::from(1), Rational::from((1, 3))));
    let h0 = CuspPt::Finite(F0Elem::from_ints(-1, -1));
    ReductionScript {
        steps: vec![
            Step::R2 { split: g0, term: 0 },
            Step::R1 { gamma: Mat2::g(), term: 1 },
            Step::R1 { gamma: Mat2::translation(&F0Elem::one()), term: 0 },
            Step::R4 { term: 0 },
            Step::R2 { split: h0, term: 0 },
            Step::R1 { gamma: Mat2::h(), term: 2 },
            Step::R2 { split: CuspPt::Infinity, term: 0 },
            Step::R1 {
                gamma: Mat2::translation(&F0Elem::from_ints(-1, -1)),
                term: 3,
            },
            Step::R3 { term: 0, other: 3 },
            Step::R4 { term: 1 },
            Step::R3 { term: 1, other: 2 },
        ],
    }
}

/// The starting sum of the worked example, anchored at the cusp infinity.
pub fn builtin_initial_sum() -> IntegralSum {
    initial_sum(&Mat2::gamma_phi(), &CuspPt::Infinity)
}

/// Variant of the worked reduction anchored at the cusp 0; its value agrees
/// with the infinity-anchored one modulo the period lattice.
pub fn builtin_zero_anchored() -> (IntegralSum, ReductionScript) {
    let init = initial_sum(&Mat2::gamma_phi(), &CuspPt::zero());
    let gphi_inf = Mat2::gamma_phi().apply_cusp(&CuspPt::Infinity);
    let g0 = CuspPt::Finite(F0Elem::new(Rational::from(1), Rational::from((1, 3))));
    let h0 = CuspPt::Finite(F0Elem::from_ints(-1, -1));
    let script = ReductionScript {
        steps: vec![
            Step::R2 { split: CuspPt::Infinity, term: 0 },
            Step::R2 { split: gphi_inf, term: 1 },
            Step::R1 { gamma: Mat2::gamma_phi(), term: 2 },
            Step::R3 { term: 0, other: 2 },
            // the remaining term (index 1) is the infinity-anchored integral
            Step::R2 { split: g0, term: 1 },
            Step::R1 { gamma: Mat2::g(), term: 2 },
            Step::R1 { gamma: Mat2::translation(&F0Elem::one()), term: 1 },
            Step::R4 { term: 1 },
            Step::R2 { split: h0, term: 1 },
            Step::R1 { gamma: Mat2::h(), term: 3 },
            Step::R2 { split: CuspPt::Infinity, term: 1 },
            Step::R1 {
                gamma: Mat2::translation(&F0Elem::from_ints(-1, -1)),
                term: 4,
            },
            Step::R3 { term: 1, other: 4 },
            Step::R4 { term: 2 },
            Step::R3 { term: 2, other: 3 },
        ],
    };
    (init, script)
}

/// The expected final normal form of the worked reduction: the two terms
/// int_{-1/(5(z1-1)) + sqrt2 + 1}^{-1/(5(z1-1))} int_0^inf and
/// int_{-1/(5 G^-1 z1)}^{H^-1 (-1/(5(z1-1)))} int_0^inf.
pub fn builtin_expected_sum() -> IntegralSum {
    let m = Mat2::w5().mul(&Mat2::translation(&F0Elem::from_ints(-1, 0))); // -1/(5(z1-1))
    let x = FormalLimit::OfZ1(m.clone());
    let x_shift = FormalLimit::OfZ1(Mat2::translation(&F0Elem::from_ints(1, 1)).mul(&m));
    let g_img = FormalLimit::OfZ1(Mat2::w5().mul(&Mat2::g().adjugate()));
    let h_img = FormalLimit::OfZ1(Mat2::h().adjugate().mul(&m));
    let zero = FormalLimit::Cusp(CuspPt::zero());
    let inf = FormalLimit::Cusp(CuspPt::Infinity);
    IntegralSum {
        terms: vec![
            (
                1,
                Integral::FourLimit {
                    outer_from: x_shift,
                    outer_to: x,
                    inner_from: zero.clone(),
                    inner_to: inf.clone(),
                },
            ),
            (
                1,
                Integral::FourLimit {
                    outer_from: g_img,
                    outer_to: h_img,
                    inner_from: zero,
                    inner_to: inf,
                },
            ),
        ],
    }
}

/// Numerically evaluate a fully reduced sum at a concrete z1, splitting each
/// cusp integral via W_5 and summing the given form pieces.
pub fn evaluate_sum(
    sum: &IntegralSum,
    z1: &Complex,
    table: &TermTable,
    forms: &[FormSpec],
    prec: u32,
) -> Result<Complex> {
    let wprec = prec + 8;
    let mut total = Complex::new(wprec);
    for (sign, t) in &sum.terms {
        let Integral::FourLimit { outer_from, outer_to, inner_from, inner_to } = t else {
            return Err(CoreError::Expansion(
                "evaluate_sum requires fully reduced 4-limit terms".into(),
            ));
        };
        let inner = match (inner_from, inner_to) {
            (a, b) if is_zero_cusp(a) && is_inf_cusp(b) => (Cusp::Zero, Cusp::Infinity),
            (a, b) if is_inf_cusp(a) && is_zero_cusp(b) => (Cusp::Infinity, Cusp::Zero),
            _ => {
                return Err(CoreError::Expansion(format!(
                    "inner limits {inner_from}..{inner_to} are not the cusps 0, infinity"
                )))
            }
        };
        let x1 = eval_outer(outer_from, z1, wprec)?;
        let x2 = eval_outer(outer_to, z1, wprec)?;
        let pieces = cusp_split(&Limit::Point(x1), &Limit::Point(x2), inner, wprec)?;
        for p in pieces {
            let v = double_integral_sum(
                forms, table, &p.outer.0, &p.outer.1, &p.inner.0, &p.inner.1, wprec,
            )?;
            let s = *sign * p.sign;
            if s >= 0 {
                total += v;
            } else {
                total -= v;
            }
        }
    }
    Ok(Complex::with_val(prec, total))
}

fn is_zero_cusp(l: &FormalLimit) -> bool {
    matches!(l, FormalLimit::Cusp(CuspPt::Finite(x)) if x.is_zero())
}

fn is_inf_cusp(l: &FormalLimit) -> bool {
    matches!(l, FormalLimit::Cusp(CuspPt::Infinity))
}

fn eval_outer(l: &FormalLimit, z1: &Complex, prec: u32) -> Result<Complex> {
    match l {
        FormalLimit::OfZ1(m) => Ok(m.apply_complex(z1, Place::V1, prec)),
        FormalLimit::Cusp(_) => Err(CoreError::Expansion(format!(
            "outer limit {l} is a cusp; only z1-based outer limits are evaluable"
        ))),
    }
}

/// The outer limit values of a reduced sum at a concrete z1, together with
/// their W_5 images (both appear as endpoints after cusp splitting); used to
/// choose the expansion's y-minima.
pub fn outer_endpoint_values(
    sum: &IntegralSum,
    z1: &Complex,
    prec: u32,
) -> Result<Vec<Complex>> {
    let mut out = Vec::new();
    for (_, t) in &sum.terms {
        let Integral::FourLimit { outer_from, outer_to, .. } = t else {
            return Err(CoreError::Expansion("sum not fully reduced".into()));
        };
        for l in [outer_from, outer_to] {
            let z = eval_outer(l, z1, prec)?;
            let w = -Complex::with_val(prec, &z * 5u32).recip();
            out.push(z);
            out.push(w);
        }
    }
    Ok(out)
}

/// Best-effort bounded breadth-first search for a reduction script, over R4,
/// R3 merges, R2 splits at the given cusps, and R1 with the given matrices.
/// Off by default in the pipeline; scripts it finds are verified like any
/// user-supplied script.
pub fn search_reduction(
    initial: &IntegralSum,
    gammas: &[Mat2],
    splits: &[CuspPt],
    max_depth: usize,
) -> Option<ReductionScript> {
    use std::collections::{HashSet, VecDeque};
    let mut queue: VecDeque<(IntegralSum, Vec<Step>)> = VecDeque::new();
    let mut seen: HashSet<String> = HashSet::new();
    queue.push_back((initial.clone(), Vec::new()));
    seen.insert(initial.canonical_string());
    while let Some((sum, path)) = queue.pop_front() {
        if sum.all_reduced() {
            return Some(ReductionScript { steps: path });
        }
        if path.len() >= max_depth {
            continue;
        }
        let n = sum.terms.len();
        let mut moves: Vec<Step> = Vec::new();
        for t in 0..n {
            moves.push(Step::R4 { term: t });
            for g in gammas {
                moves.push(Step::R1 { gamma: g.clone(), term: t });
            }
            for s in splits {
                moves.push(Step::R2 { split: s.clone(), term: t });
            }
            for o in 0..n {
                if o != t {
                    moves.push(Step::R3 { term: t, other: o });
                }
            }
        }
        for mv in moves {
            if let Ok(next) = apply_rule(&sum, &mv, path.len()) {
                let key = next.canonical_string();
                if seen.insert(key) {
                    let mut p = path.clone();
                    p.push(mv);
                    queue.push_back((next, p));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigendata::{extend_table, load_fixture, pseudo_eigenvalue};
    use crate::hmfexp::{alpha_form, build_expansion_with_minima};

    #[test]
    fn membership_examples() {
        assert!(check_gamma_membership(&Mat2::g()).unwrap());
        assert!(check_gamma_membership(&Mat2::h()).unwrap());
        assert!(check_gamma_membership(&Mat2::identity()).unwrap());
        assert!(check_gamma_membership(&Mat2::gamma_phi()).unwrap());
        // W_5 has determinant 5: not in Gamma_psi
        assert!(!check_gamma_membership(&Mat2::w5()).unwrap());
        // lower-left not divisible by (5)
        let bad = Mat2::from_ints([(1, 0), (0, 0), (1, 0), (1, 0)]);
        assert!(!check_gamma_membership(&bad).unwrap());
        // psi(a) = -1: a = sqrt2 has norm -2 = 3 mod 5
        let bad_psi = Mat2::new(
            F0Elem::sqrt2(),
            F0Elem::from_ints(-1, 0),
            F0Elem::from_ints(5, 0),
            F0Elem::from_ints(0, -2),
        );
        assert_eq!(bad_psi.det(), F0Elem::one());
        assert!(!check_gamma_membership(&bad_psi).unwrap());
        let nonint = Mat2::new(
            F0Elem::new(Rational::from((1, 2)), Rational::new()),
            F0Elem::zero(),
            F0Elem::zero(),
            F0Elem::one(),
        );
        assert!(check_gamma_membership(&nonint).is_err());
    }

    #[test]
    fn det_identities() {
        assert_eq!(Mat2::g().det(), F0Elem::one());
        assert_eq!(Mat2::h().det(), F0Elem::one());
        assert_eq!(Mat2::gamma_phi().det(), F0Elem::one());
        // gamma_phi . infinity = (4 sqrt2 + 11)/10 = G . infinity
        let gp = Mat2::gamma_phi().apply_cusp(&CuspPt::Infinity);
        let gi = Mat2::g().apply_cusp(&CuspPt::Infinity);
        assert_eq!(gp, gi);
        assert_eq!(
            gp,
            CuspPt::Finite(F0Elem::new(Rational::from((11, 10)), Rational::from((4, 10))))
        );
    }

    #[test]
    fn degenerate_split_removed() {
        let sum = builtin_initial_sum();
        let step = Step::R2 { split: CuspPt::Infinity, term: 0 };
        let out = apply_rule(&sum, &step, 0).unwrap();
        // split point equals inner_from: zero term dropped, sum unchanged
        assert_eq!(out.canonical_string(), sum.canonical_string());
    }

    #[test]
    fn r1_example_step() {
        // R1 with G on int^{z1} int_{G.0}^{G.inf} -> int^{G^-1 z1} int_0^inf
        let g = Mat2::g();
        let sum = IntegralSum {
            terms: vec![(
                1,
                Integral::ThreeLimit {
                    outer: FormalLimit::z1(),
                    inner_from: FormalLimit::Cusp(g.apply_cusp(&CuspPt::zero())),
                    inner_to: FormalLimit::Cusp(g.apply_cusp(&CuspPt::Infinity)),
                },
            )],
        };
        let out = apply_rule(&sum, &Step::R1 { gamma: g.clone(), term: 0 }, 0).unwrap();
        let (s, t) = &out.terms[0];
        assert_eq!(*s, 1);
        let Integral::ThreeLimit { outer, inner_from, inner_to } = t else { panic!() };
        assert!(is_zero_cusp(inner_from));
        assert!(is_inf_cusp(inner_to));
        assert_eq!(*outer, FormalLimit::OfZ1(g.adjugate()));
    }

    #[test]
    fn r4_example_step() {
        // int^{z1 - 1} int_inf^{sqrt2/3} -> int^{-1/(5(z1-1))} int_0^{-3 sqrt2/10}
        let sum = IntegralSum {
            terms: vec![(
                1,
                Integral::ThreeLimit {
                    outer: FormalLimit::OfZ1(Mat2::translation(&F0Elem::from_ints(-1, 0))),
                    inner_from: FormalLimit::Cusp(CuspPt::Infinity),
                    inner_to: FormalLimit::Cusp(CuspPt::Finite(F0Elem::new(
                        Rational::new(),
                        Rational::from((1, 3)),
                    ))),
                },
            )],
        };
        let out = apply_rule(&sum, &Step::R4 { term: 0 }, 0).unwrap();
        let Integral::ThreeLimit { inner_from, inner_to, .. } = &out.terms[0].1 else { panic!() };
        assert!(is_zero_cusp(inner_from));
        assert_eq!(
            *inner_to,
            FormalLimit::Cusp(CuspPt::Finite(F0Elem::new(
                Rational::new(),
                Rational::from((-3, 10))
            )))
        );
    }

    #[test]
    fn builtin_script_reaches_expected_form() {
        let script = builtin_example_script();
        let final_sum = run_script(&builtin_initial_sum(), &script).unwrap();
        assert!(final_sum.all_reduced());
        assert_eq!(final_sum.canonical_string(), builtin_expected_sum().canonical_string());
    }

    #[test]
    fn builtin_script_prefixes_complete() {
        // every prefix, completed by the remaining steps, reaches the same
        // final normal form (3-limit intermediates evaluated through the
        // final reduced form of their own sub-script)
        let script = builtin_example_script();
        let want = builtin_expected_sum().canonical_string();
        for cut in 0..=script.steps.len() {
            let mut sum = builtin_initial_sum();
            for (i, s) in script.steps[..cut].iter().enumerate() {
                sum = apply_rule(&sum, s, i).unwrap();
            }
            for (i, s) in script.steps[cut..].iter().enumerate() {
                sum = apply_rule(&sum, s, cut + i).unwrap();
            }
            assert_eq!(sum.canonical_string(), want, "prefix {cut}");
        }
    }

    #[test]
    fn zero_anchored_script_runs() {
        let (init, script) = builtin_zero_anchored();
        let out = run_script(&init, &script).unwrap();
        assert!(out.all_reduced());
        assert_eq!(out.terms.len(), 3);
        // the last two terms agree with the infinity-anchored reduction
        let want = builtin_expected_sum();
        assert_eq!(out.terms[1], want.terms[0]);
        assert_eq!(out.terms[2], want.terms[1]);
        // the extra first term is the closed cycle int_{gphi^-1 z1}^{z1}
        let Integral::FourLimit { outer_from, outer_to, .. } = &out.terms[0].1 else { panic!() };
        assert_eq!(*outer_to, FormalLimit::z1());
        assert_eq!(*outer_from, FormalLimit::OfZ1(Mat2::gamma_phi().adjugate()));
    }

    #[test]
    fn script_json_roundtrip() {
        let script = builtin_example_script();
        let json = script.to_json();
        let back = ReductionScript::from_json(&json).unwrap();
        let a = run_script(&builtin_initial_sum(), &script).unwrap();
        let b = run_script(&builtin_initial_sum(), &back).unwrap();
        assert_eq!(a.canonical_string(), b.canonical_string());
        assert!(json.contains("\"R1\"") && json.contains("sqrt2"));
    }

    #[test]
    fn rejected_scripts_report_step() {
        // R1 with a matrix outside Gamma_psi
        let bad = ReductionScript {
            steps: vec![Step::R1 { gamma: Mat2::w5(), term: 0 }],
        };
        let err = run_script(&builtin_initial_sum(), &bad).unwrap_err();
        match err {
            CoreError::ScriptRejected { step, reason } => {
                assert_eq!(step, 0);
                assert!(reason.contains("Gamma_psi"), "{reason}");
            }
            e => panic!("{e}"),
        }
        // R3 on mismatched inner limits
        let bad = ReductionScript {
            steps: vec![
                Step::R2 { split: CuspPt::zero(), term: 0 },
                Step::R3 { term: 0, other: 1 },
            ],
        };
        let err = run_script(&builtin_initial_sum(), &bad).unwrap_err();
        match err {
            CoreError::ScriptRejected { step, .. } => assert_eq!(step, 1),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bounded_search_finds_simple_reduction() {
        let g = Mat2::g();
        let init = IntegralSum {
            terms: vec![
                (
                    1,
                    Integral::ThreeLimit {
                        outer: FormalLimit::z1(),
                        inner_from: FormalLimit::Cusp(g.apply_cusp(&CuspPt::zero())),
                        inner_to: FormalLimit::Cusp(g.apply_cusp(&CuspPt::Infinity)),
                    },
                ),
                (
                    -1,
                    Integral::ThreeLimit {
                        outer: FormalLimit::z1(),
                        inner_from: FormalLimit::Cusp(CuspPt::zero()),
                        inner_to: FormalLimit::Cusp(CuspPt::Infinity),
                    },
                ),
            ],
        };
        let script = search_reduction(&init, &[g], &[], 3).expect("search failed");
        let out = run_script(&init, &script).unwrap();
        assert!(out.all_reduced());
        assert_eq!(out.terms.len(), 1);
    }

    fn alpha_smoke(bound: u64, y1m: f64, y2m: f64, prec: u32) -> (TermTable, Vec<FormSpec>) {
        let p = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures/eigen40_smoke.json");
        let et = extend_table(&load_fixture(&p).unwrap(), bound).unwrap();
        let lam = pseudo_eigenvalue(&et).unwrap();
        let tt = build_expansion_with_minima(&et, bound, y1m, y2m, prec).unwrap();
        (tt, alpha_form(&lam, false).unwrap())
    }

    #[test]
    fn r1_translation_numeric_invariance() {
        let (tt, forms) = alpha_smoke(800, 0.5, 0.5, 48);
        let p = |re: f64, im: f64| Limit::point(re, im, 96);
        let a = double_integral_sum(&forms, &tt, &p(0.1, 0.8), &p(-0.2, 1.3), &p(0.0, 0.7), &p(0.3, 1.0), 48).unwrap();
        // translation by 1 lies in Gamma_psi and shifts both places by 1
        let b = double_integral_sum(&forms, &tt, &p(1.1, 0.8), &p(0.8, 1.3), &p(1.0, 0.7), &p(1.3, 1.0), 48).unwrap();
        let d = Complex::with_val(96, a - b).abs().real().to_f64();
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn r4_w5_numeric_invariance() {
        let (tt, forms) = alpha_smoke(800, 0.3, 0.3, 48);
        let p = |re: f64, im: f64| Complex::with_val(96, (re, im));
        let pts = [p(0.1, 0.5), p(-0.1, 0.6), p(0.05, 0.4), p(0.0, 0.55)];
        let w5 = |z: &Complex| -Complex::with_val(96, z * 5u32).recip();
        let lim = |z: &Complex| Limit::Point(z.clone());
        let a = double_integral_sum(&forms, &tt, &lim(&pts[0]), &lim(&pts[1]), &lim(&pts[2]), &lim(&pts[3]), 48).unwrap();
        let b = double_integral_sum(
            &forms, &tt,
            &lim(&w5(&pts[0])), &lim(&w5(&pts[1])), &lim(&w5(&pts[2])), &lim(&w5(&pts[3])), 48,
        )
        .unwrap();
        let d = Complex::with_val(96, a.clone() - b).abs().real().to_f64();
        let scale = a.abs().real().to_f64().max(1e-12);
        assert!(d < 1e-8_f64.max(scale * 1e-7), "{d} vs {scale}");
    }

    #[test]
    fn r1_g_numeric_invariance() {
        // points chosen near the isometric circles of G so that images keep
        // workable imaginary parts
        let g = Mat2::g();
        let prec = 40u32;
        let p = |re: f64, im: f64| Complex::with_val(96, (re, im));
        let outer = [p(-0.0515, 0.12), p(-0.03, 0.2)];
        let inner = [p(-1.749, 0.15), p(-1.70, 0.25)];
        let gout: Vec<Complex> = outer.iter().map(|z| g.apply_complex(z, Place::V1, 96)).collect();
        let ginn: Vec<Complex> = inner.iter().map(|z| g.apply_complex(z, Place::V2, 96)).collect();
        let mut y1m = f64::INFINITY;
        let mut y2m = f64::INFINITY;
        for z in outer.iter().chain(gout.iter()) {
            y1m = y1m.min(z.imag().to_f64());
        }
        for z in inner.iter().chain(ginn.iter()) {
            y2m = y2m.min(z.imag().to_f64());
        }
        let pfull = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures/eigen40.json");
        let et = extend_table(&load_fixture(&pfull).unwrap(), 10000).unwrap();
        let lam = pseudo_eigenvalue(&et).unwrap();
        let forms = alpha_form(&lam, false).unwrap();
        let tt = build_expansion_with_minima(&et, 10000, y1m, y2m, prec).unwrap();
        let lim = |z: &Complex| Limit::Point(z.clone());
        let a = double_integral_sum(&forms, &tt, &lim(&outer[0]), &lim(&outer[1]), &lim(&inner[0]), &lim(&inner[1]), prec).unwrap();
        let b = double_integral_sum(&forms, &tt, &lim(&gout[0]), &lim(&gout[1]), &lim(&ginn[0]), &lim(&ginn[1]), prec).unwrap();
        let d = Complex::with_val(96, a - b).abs().real().to_f64();
        assert!(d < 1e-5, "{d}");
    }

    #[test]
    fn evaluate_sum_plumbing() {
        let (tt, forms) = alpha_smoke(800, 0.07, 0.4, 48);
        let z1 = Complex::with_val(96, (0.2, 0.9));
        // single term int_{z1+1}^{z1} int_0^inf
        let sum = IntegralSum {
            terms: vec![(
                1,
                Integral::FourLimit {
                    outer_from: FormalLimit::OfZ1(Mat2::translation(&F0Elem::one())),
                    outer_to: FormalLimit::z1(),
                    inner_from: FormalLimit::Cusp(CuspPt::zero()),
                    inner_to: FormalLimit::Cusp(CuspPt::Infinity),
                },
            )],
        };
        let got = evaluate_sum(&sum, &z1, &tt, &forms, 48).unwrap();
        // by hand: cusp_split then two 4-limit integrals
        let x1 = Complex::with_val(96, (1.2, 0.9));
        let pieces = cusp_split(
            &Limit::Point(x1),
            &Limit::Point(z1.clone()),
            (Cusp::Zero, Cusp::Infinity),
            96,
        )
        .unwrap();
        let mut want = Complex::new(96);
        for p in &pieces {
            let v = double_integral_sum(&forms, &tt, &p.outer.0, &p.outer.1, &p.inner.0, &p.inner.1, 56).unwrap();
            want += v;
        }
        let d = Complex::with_val(96, got.clone() - want).abs().real().to_f64();
        assert!(d < 1e-10, "{d}");
        assert!(got.abs().real().to_f64() > 0.0);
        // unreduced sums rejected
        let err = evaluate_sum(&builtin_initial_sum(), &z1, &tt, &forms, 48).unwrap_err();
        assert!(format!("{err}").contains("reduced"), "{err}");
        // empty sum evaluates to zero
        let zero = evaluate_sum(&IntegralSum { terms: vec![] }, &z1, &tt, &forms, 48).unwrap();
        assert_eq!(zero.abs().real().to_f64(), 0.0);
    }
}
