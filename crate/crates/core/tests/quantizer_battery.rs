//! Lattice approximations of twenty zero-mean targets.

mod common;

use std::time::{Duration, Instant};

use indlim::measures::{levy_distance, scale};
use indlim::quantizer::{half_width, lattice_constants, quantize};
use indlim::rational::ratio;
use indlim::sequence::SequenceSpec;
use indlim::Rational;
use num_traits::{One, Zero};

const CALL_LIMIT: Duration = Duration::from_secs(1);

#[test]
fn twenty_targets_quantize_within_eps() {
    let seq = SequenceSpec::sqrt();
    let all = common::quantizer_targets();
    assert_eq!(all.len(), 20);
    let epss = [ratio(1, 4), ratio(1, 8), ratio(1, 16)];
    for (i, target) in all.iter().enumerate() {
        assert!(target.mean().is_zero(), "target {i} mean");
        for eps in &epss {
            let k = lattice_constants(target, eps, &seq).unwrap();
            // a few windows past the threshold, including n0 itself
            let n0 = u64::try_from(&k.n0).unwrap();
            for n in [n0, 4 * n0 + 1, 16 * n0] {
                let a_n = seq.a_u64(n).unwrap();
                let start = Instant::now();
                let q = quantize(target, eps, k.c0, &a_n, 4096).unwrap();
                let took = start.elapsed();
                assert!(took < CALL_LIMIT, "target {i}: {took:?}");
                let eta = &q.eta;
                eta.check().unwrap();
                assert_eq!(eta.d, half_width(&a_n, k.c0).unwrap());
                let bound = eta.d as i64 - 1;
                assert!(eta.counts.keys().all(|v| v.abs() <= bound), "support bound");
                assert_eq!(eta.first_moment(), 0);
                let real = eta.to_real();
                assert_eq!(real.total_mass(), Rational::one());
                assert!(real.mean().is_zero());
                let post = levy_distance(&scale(&real, &a_n).unwrap(), target);
                assert!(post <= indlim::rational::to_f64(eps), "target {i}, eps {eps}, n {n}: {post}");
                assert_eq!(post, q.distance);
            }
        }
    }
}
