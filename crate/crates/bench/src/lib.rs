//! Shared fixtures for the criterion benches.

use faithcheck_core::metrics::ExampleScore;
use faithcheck_core::rng::DetRng;

/// A mixed-bin scored population of the given size.
pub fn population(n: usize, seed: u64) -> Vec<ExampleScore> {
    let mut rng = DetRng::new(seed);
    (0..n)
        .map(|i| {
            ExampleScore::scored(format!("bench-{i}"), vec![(rng.next_f64(), rng.next_f64())])
                .expect("values in range")
        })
        .collect()
}
