mod common;

use aftnet::evaluation::c_index;
use aftnet::AftError;
use ndarray::Array1;
use rand::Rng;

#[test]
fn c_index_equals_pair_enumeration() {
    let mut checked = 0;
    for seed in 0..100u64 {
        let mut r = common::rng(seed);
        let n = r.random_range(2..=15);
        // small integer ranges force tied times and tied risks
        let times: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
        let risks: Vec<f64> = (0..n).map(|_| r.random_range(0..4) as f64 * 0.5).collect();
        let events: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        let got = c_index(Array1::from(risks.clone()).view(), Array1::from(times.clone()).view(), &events);
        match common::brute_c_index(&risks, &times, &events) {
            Some((num, den)) => {
                assert_eq!(got.unwrap(), num as f64 / den as f64, "seed {seed}");
                checked += 1;
            }
            None => assert!(matches!(got, Err(AftError::NoComparablePairs))),
        }
    }
    assert!(checked > 80);
}
