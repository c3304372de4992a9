//! Empirical Birkhoff-sum laws against the exact oracle.

mod common;

use indlim::builder::{run_construction, PipelineOptions};
use indlim::measures::kolmogorov_distance;
use indlim::sequence::SequenceSpec;
use indlim::verifier::{dkw_band, empirical_sum_law, law_of};

const SEEDS: u64 = 20;
const SAMPLES: u64 = 100_000;
const BAND: f64 = 0.00515;
const MAX_EXCURSIONS: usize = 1;

#[test]
fn empirical_laws_stay_in_the_dkw_band() {
    assert!((dkw_band(SAMPLES, 0.01) - BAND).abs() < 1e-5);
    let seq = SequenceSpec::sqrt();
    let s = common::toy_schedule();
    let out = run_construction(&s, &PipelineOptions::default()).unwrap();
    let castle = out.construction.castle();
    let n = s.stage(1).n_u64().unwrap();
    let exact = law_of(castle, &out.set, n, &seq, 1 << 22).unwrap();
    let mut excursions = Vec::new();
    for seed in 0..SEEDS {
        let emp = empirical_sum_law(castle, &out.set, n, &exact.a_n, &exact.mu_a, SAMPLES, seed).unwrap();
        let d = kolmogorov_distance(&emp.law, &exact.law);
        if d > BAND {
            excursions.push((seed, d));
        }
    }
    assert!(excursions.len() <= MAX_EXCURSIONS, "{excursions:?}");
}
