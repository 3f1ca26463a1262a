mod common;

use common::random::skew_triples;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn skew_form_vanishes_on_the_diagonal() {
    let rep = skew_triples(&mut ChaCha8Rng::seed_from_u64(1), 1000);
    println!("{rep:?}");
    assert!(rep.diagonal <= 1e-13, "{rep:?}");
    assert!(rep.antisymmetry <= 1e-13, "{rep:?}");
    assert!(rep.consistency <= 1e-12, "{rep:?}");
}
