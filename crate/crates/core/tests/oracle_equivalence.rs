//! The run-list oracle against exhaustive pointwise enumeration.

mod common;

use std::time::Instant;

use common::{random_castle, random_set};
use indlim::verifier::{exact_count_law, pointwise_count_law};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASTLES: u64 = 100;
const WRAP_MAX: usize = 1 << 22;

#[test]
fn exact_and_pointwise_laws_coincide() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..CASTLES {
        let c = random_castle(&mut rng);
        assert!(c.max_height() <= 64);
        let a = random_set(&c, &mut rng);
        for _ in 0..3 {
            let n = rng.gen_range(1..=3 * c.main_height() + 2);
            let exact = exact_count_law(&c, &a, n, WRAP_MAX).unwrap();
            let point = pointwise_count_law(&c, &a, n);
            assert_eq!(exact, point, "castle {i}, n = {n}");
        }
    }
    assert!(start.elapsed().as_secs() < 120);
}
