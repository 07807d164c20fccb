//! Log-averaged empirical law of i.i.d. standard normals.
//!
//! With weights `1/k` the KS distance behaves like the supremum of a
//! Brownian bridge scaled by `sqrt(sum w_k^2) / sum w_k`, which for
//! `n = 10^5` is about `1.28 / ln(10^5) = 0.11`; the effective sample size
//! is only `(ln n)^2 / (pi^2 / 6)`.

use nonconv_core::asclt::LogAveragedEmpirical;
use nonconv_core::replica::replica_rng;
use nonconv_core::stats::NormalCdf;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn ks_distance_matches_the_effective_sample_size() {
    let n = 100_000usize;
    let w: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    let w2: f64 = (1..=n).map(|k| 1.0 / (k * k) as f64).sum();
    let scale = w2.sqrt() / w;
    let reference = NormalCdf::new(1.0).unwrap();
    let mut ks: Vec<f64> = (0..20u64)
        .map(|seed| {
            let mut rng = replica_rng(seed, 0);
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            LogAveragedEmpirical::accumulate(&v).unwrap().ks_distance(&reference).unwrap()
        })
        .collect();
    ks.sort_by(f64::total_cmp);
    // Kolmogorov quantiles: 0.1% at 0.44, 99.9% at 1.95
    assert!(ks[19] < 1.95 * scale, "{ks:?}");
    assert!(ks[10] > 0.44 * scale, "{ks:?}");
    assert!(ks[10] > 0.02, "median {}", ks[10]);
}
