use atc_core::atrpoint::{fixed_point, EmbeddingData};
use atc_core::eigendata::{extend_table, load_fixture};
use atc_core::hmfexp::build_expansion_with_minima;
use atc_core::reduction::{builtin_expected_sum, outer_endpoint_values};

fn main() {
    let prec = 128u32;
    let eigen = load_fixture(std::path::Path::new("fixtures/eigen40.json")).unwrap();
    let data = EmbeddingData::paper_embedding();
    let z1 = fixed_point(&data, prec).unwrap();
    let sum = builtin_expected_sum();
    let mut y1m = f64::INFINITY;
    for e in outer_endpoint_values(&sum, &z1, prec).unwrap() {
        y1m = y1m.min(e.imag().to_f64());
    }
    let y2m = 1.0 / 5f64.sqrt();
    println!("y1m={y1m:.6} y2m={y2m:.6}");
    for nb in [5000u64, 20000, 160000] {
        let t0 = std::time::Instant::now();
        let table = extend_table(&eigen, nb).unwrap();
        let terms = build_expansion_with_minima(&table, nb, y1m * 0.98, y2m * 0.98, prec).unwrap();
        println!(
            "nb={nb}: tail={:.6e} terms={} build={:?}",
            terms.tail_bound(),
            terms.terms.len(),
            t0.elapsed()
        );
    }
}
