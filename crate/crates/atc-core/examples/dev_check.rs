use atc_core::atrpoint::*;
use atc_core::eigendata::load_fixture;
use atc_core::reduction::builtin_expected_sum;
use rug::{Complex, Float};

fn main() {
    let prec = 128u32;
    let eigen = load_fixture(std::path::Path::new("fixtures/eigen40.json")).unwrap();
    let d = EmbeddingData::paper_embedding();
    let sum = builtin_expected_sum();
    let op = Float::with_val(prec, Float::parse(PAPER_OMEGA1_PLUS).unwrap());
    let frame = oda_frame(&op, prec).unwrap();
    let want = Complex::with_val(
        prec,
        (
            Float::with_val(prec, Float::parse("6.1210069519472105302223690235").unwrap()),
            Float::with_val(prec, Float::parse("5.4381903029486320686211994460").unwrap()),
        ),
    );
    let mut js = Vec::new();
    for nb in [5000u64, 20000, 160000] {
        let params = JParams { norm_bound: nb, prec };
        let t0 = std::time::Instant::now();
        let det = compute_j_sum_detailed(&d, &eigen, &sum, &params).unwrap();
        let j = compute_j(&det.sum, &frame, prec).unwrap();
        let dg = Complex::with_val(prec, &j - &want).abs().real().to_f64();
        println!(
            "nb={nb}: |J-golden|={dg:.3e} tail={:.3e} terms={} y1m={:.4} t={:?}",
            det.tail_bound,
            det.term_count,
            det.y1_min,
            t0.elapsed()
        );
        println!("  J = {:.32} + {:.32} i", j.real(), j.imag());
        js.push(j);
    }
    for (i, nb) in [5000u64, 20000].iter().enumerate() {
        let dd = Complex::with_val(prec, &js[i] - &js[2]).abs().real().to_f64();
        println!("|J({nb}) - J(160000)| = {dd:.3e}");
    }
}
