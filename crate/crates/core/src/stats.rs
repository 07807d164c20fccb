//! Small statistical toolkit shared by the suites: compensated summation,
//! jackknife errors, least-squares slopes and cumulative distribution
//! functions (closed-form and empirical).

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: CompensatedSum = xs.iter().map(|x| (x - m) * (x - m)).collect();
    ss.value() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Delete-one jackknife. `stat(None)` is the full-sample statistic and
/// `stat(Some(r))` the statistic with observation `r` left out.
/// Returns `(estimate, standard error)`.
pub fn jackknife<F>(n: usize, stat: F) -> (f64, f64)
where
    F: Fn(Option<usize>) -> f64,
{
    let full = stat(None);
    if n < 2 {
        return (full, f64::NAN);
    }
    let loo: Vec<f64> = (0..n).map(|r| stat(Some(r))).collect();
    let loo_mean = mean(&loo);
    let ss: CompensatedSum = loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).collect();
    let nf = n as f64;
    (full, ((nf - 1.0) / nf * ss.value()).sqrt())
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    for (x, y) in xs.iter().zip(ys) {
        sxy.add((x - mx) * (y - my));
        sxx.add((x - mx) * (x - mx));
    }
    sxy.value() / sxx.value()
}

/// A cumulative distribution function on the real line.
///
/// Step functions report their jump locations so that sup-norm distances
/// can be evaluated exactly.
pub trait Cdf {
    /// Right-continuous value `P(X <= x)`.
    fn cdf(&self, x: f64) -> f64;

    /// Left limit `P(X < x)`.
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    fn jump_points(&self) -> &[f64] {
        &[]
    }
}

/// Centered normal law with the given variance.
#[derive(Clone, Debug)]
pub struct NormalCdf {
    variance: f64,
    dist: Normal,
}

impl NormalCdf {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::DegenerateVariance(variance));
        }
        let dist = Normal::new(0.0, variance.sqrt())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self { variance, dist })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

impl Cdf for NormalCdf {
    fn cdf(&self, x: f64) -> f64 {
        self.dist.cdf(x)
    }
}

/// Classical arcsine law `(2/pi) asin(sqrt(x))` on `[0, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ArcsineCdf;

impl Cdf for ArcsineCdf {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            std::f64::consts::FRAC_2_PI * x.sqrt().asin()
        }
    }
}

/// Right-continuous step CDF of a weighted sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCdf {
    points: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightedCdf {
    /// Builds the CDF of `(value, weight)` pairs. Weights are divided by
    /// their total. Non-finite values are rejected.
    pub fn from_weighted(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if samples.iter().any(|(v, w)| !v.is_finite() || !(*w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weighted sample contains non-finite values or negative weights".into(),
            ));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: CompensatedSum = samples.iter().map(|s| s.1).collect();
        let total = total.value();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("total weight is zero".into()));
        }
        let mut points = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = CompensatedSum::new();
        for (i, (v, w)) in samples.iter().enumerate() {
            acc.add(*w);
            let last_of_run = i + 1 == samples.len() || samples[i + 1].0 != *v;
            if last_of_run {
                points.push(*v);
                cumulative.push((acc.value() / total).min(1.0));
            }
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self { points, cumulative })
    }

    /// Equal-weight empirical CDF.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        Self::from_weighted(samples.iter().map(|&v| (v, 1.0)).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Probability mass at the exact point `x`.
    pub fn mass_at(&self, x: f64) -> f64 {
        self.cdf(x) - self.cdf_left(x)
    }

    /// Sup-norm distance to `reference`, evaluated at every jump of either
    /// function using both one-sided limits.
    pub fn ks_distance(&self, reference: &dyn Cdf) -> f64 {
        let mut worst = 0.0f64;
        let mut probe = |x: f64| {
            let right = (self.cdf(x) - reference.cdf(x)).abs();
            let left = (self.cdf_left(x) - reference.cdf_left(x)).abs();
            worst = worst.max(right).max(left);
        };
        for &x in &self.points {
            probe(x);
        }
        for &x in reference.jump_points() {
            probe(x);
        }
        worst
    }
}

impl Cdf for WeightedCdf {
    fn cdf(&self, x: f64) -> f64 {
        let idx = self.points.partition_point(|&p| p <= x);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        let idx = self.points.partition_point(|&p| p < x);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    fn jump_points(&self) -> &[f64] {
        &self.points
    }
}

/// `H_n = sum_{k<=n} 1/k`, summed from the small end.
pub fn harmonic(n: u64) -> f64 {
    let mut acc = CompensatedSum::new();
    for k in (1..=n).rev() {
        acc.add(1.0 / k as f64);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 1000.0);
    }

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let (est, se) = jackknife(xs.len(), |skip| {
            let v: Vec<f64> = xs
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != skip)
                .map(|(_, x)| *x)
                .collect();
            mean(&v)
        });
        assert_relative_eq!(est, mean(&xs), epsilon = 1e-14);
        assert_relative_eq!(se, standard_error(&xs), epsilon = 1e-12);
    }

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert_relative_eq!(ols_slope(&xs, &ys), 2.5, epsilon = 1e-14);
    }

    #[test]
    fn step_at_median_is_half_away_from_normal() {
        let step = WeightedCdf::from_samples(&[0.0]).unwrap();
        let normal = NormalCdf::new(1.0).unwrap();
        assert_relative_eq!(step.ks_distance(&normal), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn empirical_cdf_limits() {
        let e = WeightedCdf::from_samples(&[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.cdf(0.5), 0.0);
        assert_eq!(e.cdf_left(1.0), 0.0);
        assert_eq!(e.cdf(1.0), 0.5);
        assert_eq!(e.cdf(2.5), 0.75);
        assert_eq!(e.cdf(3.0), 1.0);
        assert_eq!(e.mass_at(1.0), 0.5);
        assert_eq!(e.ks_distance(&e.clone()), 0.0);
    }

    #[test]
    fn arcsine_cdf_values() {
        assert_eq!(ArcsineCdf.cdf(0.0), 0.0);
        assert_relative_eq!(ArcsineCdf.cdf(0.5), 0.5, epsilon = 1e-15);
        assert_eq!(ArcsineCdf.cdf(1.0), 1.0);
    }

    #[test]
    fn normal_cdf_rejects_zero_variance() {
        assert!(matches!(NormalCdf::new(0.0), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn harmonic_numbers() {
        assert_eq!(harmonic(1), 1.0);
        assert_relative_eq!(harmonic(4), 25.0 / 12.0, epsilon = 1e-15);
    }
}
