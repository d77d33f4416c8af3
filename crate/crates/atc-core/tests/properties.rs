//! Randomized invariant suites over the exact algebra, the Hecke table, the
//! integral engine, and the lattice machinery.

use atc_core::eigendata::{extend_table, load_fixture, pseudo_eigenvalue, EigenTable};
use atc_core::elliptic::{
    elliptic_log, find_relation, period_lattice, weierstrass_map, EPoint, FEmbedding,
    WeierstrassModel,
};
use atc_core::hmfexp::{
    alpha_form, build_expansion_with_minima, double_integral_sum, FormSpec, Limit, TermTable,
};
use atc_core::nfq::{
    enumerate_ideals, factor_rational_prime, nebentypus_psi, CoefElem, F0Elem, IdealF0, Place,
    Splitting,
};
use atc_core::reduction::{check_gamma_membership, Mat2};
use proptest::prelude::*;
use rug::{Complex, Float, Rational};
use std::path::Path;
use std::sync::OnceLock;

fn fixture_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn table_10k() -> &'static EigenTable {
    static T: OnceLock<EigenTable> = OnceLock::new();
    T.get_or_init(|| {
        extend_table(&load_fixture(&fixture_path("eigen40.json")).unwrap(), 10000).unwrap()
    })
}

fn smoke_alpha() -> &'static (TermTable, Vec<FormSpec>) {
    static T: OnceLock<(TermTable, Vec<FormSpec>)> = OnceLock::new();
    T.get_or_init(|| {
        let et = extend_table(&load_fixture(&fixture_path("eigen40_smoke.json")).unwrap(), 800)
            .unwrap();
        let lam = pseudo_eigenvalue(&et).unwrap();
        let tt = build_expansion_with_minima(&et, 800, 0.3, 0.3, 48).unwrap();
        (tt, alpha_form(&lam, false).unwrap())
    })
}

fn rat(n: i64, d: u32) -> Rational {
    Rational::from((n, d.max(1)))
}

fn f0(a: (i64, u32), b: (i64, u32)) -> F0Elem {
    F0Elem::new(rat(a.0, a.1), rat(b.0, b.1))
}

prop_compose! {
    fn arb_f0()(a in -40i64..=40, ad in 1u32..4, b in -40i64..=40, bd in 1u32..4) -> F0Elem {
        f0((a, ad), (b, bd))
    }
}

prop_compose! {
    fn arb_coef()(c0 in -20i64..=20, c1 in -20i64..=20, c2 in -20i64..=20, c3 in -20i64..=20)
        -> CoefElem {
        CoefElem::from_ints(c0, c1, c2, c3)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn f0_ring_axioms(x in arb_f0(), y in arb_f0(), z in arb_f0()) {
        prop_assert_eq!(x.mul(&y), y.mul(&x));
        prop_assert_eq!(x.mul(&y).mul(&z), x.mul(&y.mul(&z)));
        prop_assert_eq!(x.mul(&y.add(&z)), x.mul(&y).add(&x.mul(&z)));
        prop_assert_eq!(x.mul(&y).norm(), Rational::from(x.norm() * y.norm()));
        prop_assert_eq!(x.mul(&y).conj(), x.conj().mul(&y.conj()));
        prop_assert_eq!(x.add(&y).trace(), Rational::from(x.trace() + y.trace()));
        if !x.is_zero() {
            prop_assert_eq!(x.mul(&x.inv().unwrap()), F0Elem::one());
        }
    }

    #[test]
    fn coef_field_axioms(x in arb_coef(), y in arb_coef(), z in arb_coef()) {
        prop_assert_eq!(x.mul(&y), y.mul(&x));
        prop_assert_eq!(x.mul(&y).mul(&z), x.mul(&y.mul(&z)));
        prop_assert_eq!(x.mul(&y.add(&z)), x.mul(&y).add(&x.mul(&z)));
        // both conjugations are ring maps and sigma_tau is an involution
        prop_assert_eq!(x.mul(&y).conj(), x.conj().mul(&y.conj()));
        prop_assert_eq!(x.mul(&y).sigma_tau(), x.sigma_tau().mul(&y.sigma_tau()));
        prop_assert_eq!(x.sigma_tau().sigma_tau(), x.clone());
        if !x.is_zero() {
            prop_assert_eq!(x.mul(&x.inv().unwrap()), CoefElem::one());
        }
        // the numeric embedding is a ring map
        let e = x.mul(&y).embed(96);
        let f = Complex::with_val(96, x.embed(96) * y.embed(96));
        prop_assert!(Complex::with_val(96, e - f).abs().real().to_f64() < 1e-20);
    }

    #[test]
    fn mat2_det_and_adjugate(
        ms in prop::collection::vec((arb_f0(), arb_f0(), arb_f0(), arb_f0()), 2),
    ) {
        let m = Mat2::new(ms[0].0.clone(), ms[0].1.clone(), ms[0].2.clone(), ms[0].3.clone());
        let n = Mat2::new(ms[1].0.clone(), ms[1].1.clone(), ms[1].2.clone(), ms[1].3.clone());
        prop_assert_eq!(m.mul(&n).det(), m.det().mul(&n.det()));
        // m * adj(m) = det(m) * I
        let prod = m.mul(&m.adjugate());
        prop_assert_eq!(prod.a.clone(), m.det());
        prop_assert_eq!(prod.d.clone(), m.det());
        prop_assert!(prod.b.is_zero() && prod.c.is_zero());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn mobius_action_is_multiplicative(
        ms in prop::collection::vec((arb_f0(), arb_f0(), arb_f0(), arb_f0()), 2),
        re in -0.9f64..0.9, im in 0.2f64..2.0,
    ) {
        let m = Mat2::new(ms[0].0.clone(), ms[0].1.clone(), ms[0].2.clone(), ms[0].3.clone());
        let n = Mat2::new(ms[1].0.clone(), ms[1].1.clone(), ms[1].2.clone(), ms[1].3.clone());
        prop_assume!(!m.det().is_zero() && !n.det().is_zero());
        let z = Complex::with_val(96, (re, im));
        for place in [Place::V1, Place::V2] {
            let a = m.apply_complex(&n.apply_complex(&z, place, 96), place, 96);
            let b = m.mul(&n).apply_complex(&z, place, 96);
            let d = Complex::with_val(96, a - b).abs().real().to_f64();
            prop_assert!(d < 1e-18, "{d}");
        }
    }

    #[test]
    fn gamma_membership_closed_under_words(word in prop::collection::vec(0u8..4, 1..6)) {
        let gens = [
            Mat2::g(),
            Mat2::h(),
            Mat2::translation(&F0Elem::one()),
            Mat2::translation(&F0Elem::sqrt2()),
        ];
        let mut m = Mat2::identity();
        for &i in &word {
            m = m.mul(&gens[i as usize]);
        }
        prop_assert!(check_gamma_membership(&m).unwrap());
    }

    #[test]
    fn hecke_multiplicative_on_random_coprime_pairs(i in 0usize..1 << 20, j in 0usize..1 << 20) {
        static IDEALS: OnceLock<Vec<IdealF0>> = OnceLock::new();
        // sorted by norm, so a prefix holds everything below a norm cutoff
        let ideals = IDEALS.get_or_init(|| {
            enumerate_ideals(10000).unwrap().into_iter().map(|e| e.ideal).collect()
        });
        let small = ideals.partition_point(|x| x.norm() <= 100);
        let b = &ideals[j % small];
        let fit = ideals.partition_point(|x| x.norm() <= 10000 / b.norm());
        let a = &ideals[i % fit];
        prop_assume!(gcd(a.norm(), b.norm()) == 1);
        let t = table_10k();
        let want = t.coefficient(a).unwrap().mul(t.coefficient(b).unwrap());
        prop_assert_eq!(t.coefficient(&a.mul(b)).unwrap().clone(), want);
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

#[test]
fn hecke_recursion_exact_on_prime_powers() {
    // a_{p^{k+1}} = a_p a_{p^k} - psi(p) N(p) a_{p^{k-1}} on good primes,
    // exhaustively over everything the 10^4 table covers
    let t = table_10k();
    let mut checked = 0usize;
    let mut p = 2u64;
    while p * p <= 10000 {
        if (2..p).all(|d| p % d != 0) {
            let primes: Vec<IdealF0> = match factor_rational_prime(p).unwrap() {
                Splitting::Split(a, b) => vec![a, b],
                Splitting::Inert(a) | Splitting::Ramified(a) => vec![a],
            };
            for pr in primes {
                if 40 % p == 0 {
                    continue;
                }
                let np = pr.norm();
                let psi = Rational::from(nebentypus_psi(&pr).unwrap() as i64 * np as i64);
                let mut k = 1u32;
                while np.pow(k + 1) <= 10000 {
                    let a_next = t.coefficient(&pr.pow(k + 1)).unwrap().clone();
                    let a_k = t.coefficient(&pr.pow(k)).unwrap();
                    let a_prev = if k == 1 {
                        CoefElem::one()
                    } else {
                        t.coefficient(&pr.pow(k - 1)).unwrap().clone()
                    };
                    let want = t
                        .coefficient(&pr)
                        .unwrap()
                        .mul(a_k)
                        .sub(&a_prev.mul_rat(&psi));
                    assert_eq!(a_next, want, "p={p} k={k}");
                    checked += 1;
                    k += 1;
                }
            }
        }
        p += 1;
    }
    assert!(checked >= 25, "only {checked} prime-power checks");
}

#[test]
fn psi_twist_and_ramanujan_on_good_primes() {
    let t = table_10k();
    let mut checked = 0usize;
    for p in 2u64..=10000 {
        if !(2..p).all(|d| d * d > p || p % d != 0) || p < 2 {
            continue;
        }
        if 40 % p == 0 {
            continue;
        }
        let primes: Vec<IdealF0> = match factor_rational_prime(p) {
            Ok(Splitting::Split(a, b)) => vec![a, b],
            Ok(Splitting::Inert(a)) | Ok(Splitting::Ramified(a)) => vec![a],
            Err(_) => continue,
        };
        for pr in primes {
            if pr.norm() > 10000 {
                continue;
            }
            let a = t.coefficient(&pr).unwrap();
            let psi = nebentypus_psi(&pr).unwrap();
            let twisted = if psi == 1 { a.conj() } else { CoefElem::zero().sub(&a.conj()) };
            assert_eq!(a.clone(), twisted, "psi-twist fails at norm {}", pr.norm());
            let bound = 2.0 * (pr.norm() as f64).sqrt();
            let absval = a.embed(96).abs().real().to_f64();
            assert!(absval <= bound * (1.0 + 1e-12), "Ramanujan at norm {}", pr.norm());
            checked += 1;
        }
    }
    assert!(checked > 1000, "only {checked} prime checks");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn double_integral_path_additivity(
        pts in prop::collection::vec((-0.5f64..0.5, 0.35f64..1.2), 3),
        inner in (-0.5f64..0.5, 0.35f64..1.2),
    ) {
        let (tt, forms) = smoke_alpha();
        let prec = 48u32;
        let lp = |xy: (f64, f64)| Limit::point(xy.0, xy.1, 96);
        let (a, b, c) = (lp(pts[0]), lp(pts[1]), lp(pts[2]));
        let (i0, i1) = (lp(inner), Limit::Infinity);
        let ab = double_integral_sum(forms, tt, &a, &b, &i0, &i1, prec).unwrap();
        let bc = double_integral_sum(forms, tt, &b, &c, &i0, &i1, prec).unwrap();
        let ac = double_integral_sum(forms, tt, &a, &c, &i0, &i1, prec).unwrap();
        let d = Complex::with_val(96, Complex::with_val(96, &ab + &bc) - &ac)
            .abs().real().to_f64();
        prop_assert!(d < 1e-10, "additivity {d}");
        // orientation antisymmetry, outer and inner
        let ba = double_integral_sum(forms, tt, &b, &a, &i0, &i1, prec).unwrap();
        let d2 = Complex::with_val(96, &ab + &ba).abs().real().to_f64();
        prop_assert!(d2 < 1e-12, "outer antisymmetry {d2}");
        let rev = double_integral_sum(forms, tt, &a, &b, &i1, &i0, prec).unwrap();
        let d3 = Complex::with_val(96, &ab + &rev).abs().real().to_f64();
        prop_assert!(d3 < 1e-12, "inner antisymmetry {d3}");
    }

    #[test]
    fn translation_invariance_of_integrals(
        t0 in -2i64..=2, t1 in -1i64..=1,
        outer in prop::collection::vec((-0.4f64..0.4, 0.4f64..1.0), 2),
        inner in prop::collection::vec((-0.4f64..0.4, 0.4f64..1.0), 2),
    ) {
        // z -> z + t for t in O_{F0} lies in Gamma_psi at both places
        let (tt, forms) = smoke_alpha();
        let t = F0Elem::from_ints(t0, t1);
        let (s1, s2) = (t.embed(Place::V1, 96).to_f64(), t.embed(Place::V2, 96).to_f64());
        let lp = |xy: (f64, f64), s: f64| Limit::point(xy.0 + s, xy.1, 96);
        let a = double_integral_sum(
            forms, tt,
            &lp(outer[0], 0.0), &lp(outer[1], 0.0), &lp(inner[0], 0.0), &lp(inner[1], 0.0), 48,
        ).unwrap();
        let b = double_integral_sum(
            forms, tt,
            &lp(outer[0], s1), &lp(outer[1], s1), &lp(inner[0], s2), &lp(inner[1], s2), 48,
        ).unwrap();
        let d = Complex::with_val(96, a - b).abs().real().to_f64();
        prop_assert!(d < 1e-9, "{d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn eta_log_round_trip_random(
        u in 0.06f64..0.94, v in 0.06f64..0.94, which in 0u8..3,
    ) {
        let prec = 128u32;
        let emb = match which {
            0 => FEmbedding::v1(),
            1 => FEmbedding::v2(true),
            _ => FEmbedding::v2(false),
        };
        let em = WeierstrassModel::paper_model().embed(emb, prec);
        let lat = period_lattice(&em, prec).unwrap();
        let z = Complex::with_val(prec, &lat.omega_second) * Float::with_val(prec, v)
            + Complex::with_val(prec, (&lat.omega_plus, Float::new(prec)))
                * Float::with_val(prec, u);
        let z = lat.reduce(&z);
        let pt = weierstrass_map(&z, &lat, &em, prec).unwrap();
        if let EPoint::Affine(_, _) = &pt {
            let zr = elliptic_log(&pt, &lat, &em, prec).unwrap();
            let d = lat
                .reduce(&Complex::with_val(prec, &zr - &z))
                .abs().real().to_f64();
            let dneg = lat
                .reduce(&Complex::with_val(prec, &zr + &z))
                .abs().real().to_f64();
            prop_assert!(d.min(dneg) < 1e-20, "{} {}", d, dneg);
        }
    }

    #[test]
    fn lattice_relation_recovery_synthetic(
        m in 1i64..=6, n in -10i64..=10, a in -6i64..=6, b in -6i64..=6,
        jr in 0.1f64..3.0, ji in 0.1f64..3.0,
    ) {
        prop_assume!(n != 0 || a != 0 || b != 0);
        let prec = 160u32;
        let em = WeierstrassModel::paper_model().embed(FEmbedding::v1(), prec);
        let lat = period_lattice(&em, prec).unwrap();
        let jnt = Complex::with_val(prec, (jr, ji));
        let om = lat.omega_minus();
        // j with m j - n jnt + a Op + b Om = 0
        let j = (Complex::with_val(prec, &jnt) * Float::with_val(prec, n)
            - Complex::with_val(prec, (&lat.omega_plus, Float::new(prec)))
                * Float::with_val(prec, a)
            - Complex::with_val(prec, &om) * Float::with_val(prec, b))
            / Float::with_val(prec, m);
        let rel = find_relation(&j, &jnt, &lat, 8, 3, 1e-40).unwrap();
        prop_assert!(rel.found, "residual {}", rel.residual);
        prop_assert!(rel.residual < 1e-40);
        // proportional to the planted relation
        prop_assert_eq!(rel.n * m, n * rel.m);
        prop_assert_eq!(rel.a * m, a * rel.m);
        prop_assert_eq!(rel.b * m, b * rel.m);
    }
}
