//! Logarithmically averaged empirical laws along a single path and their
//! distance to reference laws.
//!
//! The measure `(1/ln n) sum_{k<=n} k^{-1} delta_{v_k}` is kept with its raw
//! total mass for reporting; all comparisons use the self-normalized version
//! with weights `(1/k) / H_n`.

use serde::Serialize;

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::functional::DecomposedFunction;
use crate::gaussian::{factor, q1_reference_cdf, sample_q_uniform};
use crate::process::ProcessModel;
use crate::replica::replica_rng;
use crate::stats::{Cdf, WeightedCdf};
use crate::sums::xi_values;

/// Horizons at which KS distances are reported.
pub const CHECKPOINTS: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];
/// Horizon below which a failed comparison is reported as inconclusive.
pub const TARGET_HORIZON: u64 = 1_000_000;
pub const SCALAR_THRESHOLD: f64 = 0.1;
pub const GAUSSIAN_LANE_THRESHOLD: f64 = 0.08;
pub const CLASSICAL_ARCSINE_THRESHOLD: f64 = 0.1;
pub const ARCSINE_THRESHOLD: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by `ln n`.
    Raw,
    /// Divide by `H_n`.
    SelfNormalized,
}

/// Samples `(k, v_k)` with weights `1/k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LogAveragedEmpirical {
    entries: Vec<(u64, f64)>,
}

impl LogAveragedEmpirical {
    pub fn new() -> Self {
        Self::default()
    }

    /// Takes `values[k-1] = v_k` for `k = 1..=n`.
    pub fn accumulate(values: &[f64]) -> Result<Self> {
        Self::accumulate_from(values, 1)
    }

    /// Takes `values[i] = v_{first + i}`.
    pub fn accumulate_from(values: &[f64], first: u64) -> Result<Self> {
        let n = first + values.len() as u64 - 1;
        if values.is_empty() || n < 3 {
            return Err(Error::TooFewSamples { needed: 3, got: n.min(values.len() as u64) as usize });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("log-averaged sample contains non-finite values".into()));
        }
        Ok(Self { entries: values.iter().enumerate().map(|(i, v)| (first + i as u64, *v)).collect() })
    }

    pub fn push(&mut self, k: u64, v: f64) {
        self.entries.push((k, v));
    }

    /// Union of two accumulators over disjoint index ranges.
    pub fn merge(mut self, other: Self) -> Self {
        self.entries.extend(other.entries);
        self.entries.sort_by_key(|e| e.0);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest index `n`.
    pub fn horizon(&self) -> u64 {
        self.entries.iter().map(|e| e.0).max().unwrap_or(0)
    }

    /// `sum 1/k` over the stored indices.
    pub fn weight_sum(&self) -> f64 {
        let mut ks: Vec<u64> = self.entries.iter().map(|e| e.0).collect();
        ks.sort_unstable();
        ks.iter().rev().map(|&k| 1.0 / k as f64).sum()
    }

    /// Total mass under the given normalization.
    pub fn total_mass(&self, mode: Normalization) -> f64 {
        match mode {
            Normalization::SelfNormalized => 1.0,
            Normalization::Raw => self.weight_sum() / (self.horizon() as f64).ln(),
        }
    }

    /// Self-normalized CDF over the entries with `k <= n`.
    pub fn cdf_up_to(&self, n: u64) -> Result<WeightedCdf> {
        WeightedCdf::from_weighted(self.entries.iter().filter(|e| e.0 <= n).map(|&(k, v)| (v, 1.0 / k as f64)).collect())
    }

    pub fn cdf(&self) -> Result<WeightedCdf> {
        self.cdf_up_to(u64::MAX)
    }

    pub fn ks_distance(&self, reference: &dyn Cdf) -> Result<f64> {
        Ok(self.cdf()?.ks_distance(reference))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub n: u64,
    pub ks: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AscltReport {
    pub lane: String,
    pub n_max: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// Total mass of the `1/ln n` normalized measure at `n_max`.
    pub raw_mass: f64,
    pub threshold: f64,
    pub status: Status,
}

/// Compares the log-averaged law of `values` (indices from `first`) with
/// `reference` at every checkpoint up to the horizon.
pub fn log_average_report(
    lane: &str,
    values: &[f64],
    first: u64,
    reference: &dyn Cdf,
    threshold: f64,
) -> Result<AscltReport> {
    let acc = LogAveragedEmpirical::accumulate_from(values, first)?;
    let n_max = acc.horizon();
    let mut points: Vec<u64> = CHECKPOINTS.iter().copied().filter(|&n| n <= n_max && n >= first).collect();
    if points.last() != Some(&n_max) {
        points.push(n_max);
    }
    let checkpoints = points
        .into_iter()
        .map(|n| {
            let ks = acc.cdf_up_to(n)?.ks_distance(reference);
            Ok(Checkpoint { n, ks, threshold, pass: ks < threshold })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = checkpoints.last().expect("at least one checkpoint");
    let status = if last.pass {
        Status::Pass
    } else if n_max < TARGET_HORIZON {
        Status::Inconclusive
    } else {
        Status::Fail
    };
    Ok(AscltReport {
        lane: lane.to_string(),
        n_max,
        checkpoints,
        raw_mass: acc.total_mass(Normalization::Raw),
        threshold,
        status,
    })
}

/// `v_k = x_k / sqrt(k)` for `k = 1..`, reading `path[k]` (with `path[0]`
/// the origin).
pub fn diffusive_scaling(path: &[f64]) -> Vec<f64> {
    path.iter().enumerate().skip(1).map(|(k, v)| v / (k as f64).sqrt()).collect()
}

/// `L_k = k^{-1} #{j <= k: path[j] > 0}` for `k = 1..`.
pub fn running_occupation(path: &[f64]) -> Vec<f64> {
    let mut positive = 0u64;
    path.iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| {
            if *v > 0.0 {
                positive += 1;
            }
            positive as f64 / k as f64
        })
        .collect()
}

/// Log-averaged law of `Xi(k) k^{-1/2}` along one trajectory against
/// `N(0, R(1, 1))`.
pub fn asclt_scalar_suite(
    model: &ProcessModel,
    d: &DecomposedFunction,
    cov: &CovarianceModel,
    n_max: usize,
    seed: u64,
) -> Result<AscltReport> {
    let reference = q1_reference_cdf(cov)?;
    let traj = model.sample_trajectory(d.arity() * n_max, seed)?;
    let xi = xi_values(d, &traj, n_max)?;
    log_average_report("scalar", &diffusive_scaling(&xi), 1, &reference, SCALAR_THRESHOLD)
}

/// The scalar lane fed `Q(k) k^{-1/2}` from one simulated path of the
/// Gaussian limit, sampled at integer times.
pub fn gaussian_scalar_lane(cov: &CovarianceModel, n_max: usize, seed: u64) -> Result<AscltReport> {
    let reference = q1_reference_cdf(cov)?;
    let q = sample_q_uniform(&factor(cov)?, 1.0, n_max, &mut replica_rng(seed, 0));
    log_average_report("gaussian_scalar", &diffusive_scaling(&q), 1, &reference, GAUSSIAN_LANE_THRESHOLD)
}

/// Log-averaged law of the occupation fractions `L_k` along one trajectory
/// against `reference`.
pub fn asclt_arcsine_suite(
    model: &ProcessModel,
    d: &DecomposedFunction,
    reference: &dyn Cdf,
    n_max: usize,
    seed: u64,
    threshold: f64,
) -> Result<AscltReport> {
    let traj = model.sample_trajectory(d.arity() * n_max, seed)?;
    let xi = xi_values(d, &traj, n_max)?;
    log_average_report("arcsine", &running_occupation(&xi), 1, reference, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{harmonic, ArcsineCdf, NormalCdf};
    use approx::assert_relative_eq;

    #[test]
    fn constant_values_give_unit_step() {
        let acc = LogAveragedEmpirical::accumulate(&[2.0; 50]).unwrap();
        let cdf = acc.cdf().unwrap();
        assert_eq!(cdf.cdf_left(2.0), 0.0);
        assert_eq!(cdf.cdf(2.0), 1.0);
    }

    #[test]
    fn raw_mass_at_one_thousand() {
        let acc = LogAveragedEmpirical::accumulate(&vec![0.0; 1000]).unwrap();
        assert_relative_eq!(acc.total_mass(Normalization::Raw), harmonic(1000) / 1000f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(acc.total_mass(Normalization::Raw), 1.0836, epsilon = 1e-4);
    }

    #[test]
    fn raw_mass_approaches_one() {
        for n in [10u64, 100, 10_000] {
            let h = harmonic(n);
            assert!((h / (n as f64).ln() - 1.0).abs() <= 2.0 / (n as f64).ln());
        }
    }

    #[test]
    fn alternating_signs_split_evenly() {
        let n = 100_000;
        let values: Vec<f64> = (1..=n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let cdf = LogAveragedEmpirical::accumulate(&values).unwrap().cdf().unwrap();
        let bound = 1.0 / (n as f64).ln();
        assert!((cdf.mass_at(1.0) - 0.5).abs() < bound);
        assert!((cdf.mass_at(-1.0) - 0.5).abs() < bound);
    }

    #[test]
    fn self_normalized_weights_sum_to_one() {
        let n = 5000u64;
        let acc = LogAveragedEmpirical::accumulate(&(1..=n).map(|k| k as f64).collect::<Vec<_>>()).unwrap();
        let h = harmonic(n);
        let cdf = acc.cdf().unwrap();
        assert_relative_eq!(cdf.cdf(n as f64), 1.0, epsilon = 1e-12);
        // each atom carries (1/k)/H_n
        assert_relative_eq!(cdf.mass_at(7.0), (1.0 / 7.0) / h, epsilon = 1e-12);
    }

    #[test]
    fn too_short_input() {
        assert!(matches!(LogAveragedEmpirical::accumulate(&[1.0, 2.0]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn merge_is_order_free() {
        let values: Vec<f64> = (1..=300).map(|k| ((k * 37) % 101) as f64).collect();
        let whole = LogAveragedEmpirical::accumulate(&values).unwrap();
        let a = LogAveragedEmpirical::accumulate_from(&values[..120], 1).unwrap();
        let b = LogAveragedEmpirical::accumulate_from(&values[120..], 121).unwrap();
        assert_eq!(b.clone().merge(a.clone()).cdf().unwrap(), whole.cdf().unwrap());
        assert_eq!(a.merge(b), whole);
    }

    #[test]
    fn degenerate_path_is_half_away_from_normal() {
        let report = log_average_report("zero", &vec![0.0; 2000], 1, &NormalCdf::new(0.25).unwrap(), 0.1).unwrap();
        assert_relative_eq!(report.checkpoints.last().unwrap().ks, 0.5, epsilon = 1e-15);
        assert_eq!(report.status, Status::Inconclusive);
    }

    #[test]
    fn zero_occupation_is_far_from_arcsine() {
        let occ = running_occupation(&vec![0.0; 2001]);
        let report = log_average_report("arcsine", &occ, 1, &ArcsineCdf, 0.1).unwrap();
        assert_eq!(report.checkpoints.last().unwrap().ks, 1.0);
        assert!(!report.checkpoints.last().unwrap().pass);
    }

    #[test]
    fn prefix_changes_are_bounded() {
        let n = 1_000_000usize;
        let values: Vec<f64> = (1..=n).map(|k| ((k as f64) * 0.618_033_988_75).fract() * 2.0 - 1.0).collect();
        let mut altered = values.clone();
        for v in altered.iter_mut().take(100) {
            *v = 5.0;
        }
        let reference = NormalCdf::new(0.3).unwrap();
        let a = LogAveragedEmpirical::accumulate(&values).unwrap().ks_distance(&reference).unwrap();
        let b = LogAveragedEmpirical::accumulate(&altered).unwrap().ks_distance(&reference).unwrap();
        assert!((a - b).abs() <= 2.0 * harmonic(100) / harmonic(n as u64));
    }

    #[test]
    fn running_occupation_counts_strictly_positive() {
        assert_eq!(running_occupation(&[0.0, 1.0, -1.0, 0.0, 2.0]), vec![1.0, 0.5, 1.0 / 3.0, 0.5]);
    }
}
