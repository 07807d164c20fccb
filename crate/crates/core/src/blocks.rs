//! Big and small blocks of increasing length.
//!
//! Time is cut into big blocks `(a(j), b(j)]` of length `floor(j^tau)`
//! separated by small blocks `(b(j), a(j+1)]` of length `floor(j^theta)`:
//!
//! ```text
//! a(1) = 0, b(1) = 1, a(j) = b(j-1) + floor((j-1)^theta), b(j) = a(j) + floor(j^tau)
//! ```
//!
//! Every observable implemented here is a function of the current state,
//! so no smoothing of the summands is needed and the block sums are taken
//! over the summands themselves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::DecomposedFunction;
use crate::process::ProcessModel;
use crate::replica::map_replicas;
use crate::stats::{jackknife, ols_slope, CompensatedSum};
use crate::sums::component_terms;

/// Smallest replica count accepted by [`negligibility_diagnostic`].
pub const MIN_REPLICAS: usize = 50;

/// `floor(j^e)`, nudged so exact integer powers are not lost to rounding.
pub fn floor_pow(j: u64, e: f64) -> u64 {
    let v = (j as f64).powf(e);
    let k = (v + 1e-9).floor();
    k as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub eta: f64,
    pub theta: f64,
    pub tau: f64,
    /// `a(j)`, `b(j)`, `r(j)` for `j = 1..=J`, stored at index `j - 1`.
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub r: Vec<u64>,
    /// Set when a `delta` was supplied and `tau >= delta / 4`.
    pub exceeds_delta_bound: Option<bool>,
}

fn check_gate(eta: f64, theta: f64, tau: f64) -> Result<()> {
    let finite = [eta, theta, tau].iter().all(|x| x.is_finite() && *x >= 0.0);
    if !finite || !(4.0 * eta < 2.0 * theta && 2.0 * theta < tau) {
        return Err(Error::ParameterGateViolated(format!("eta={eta}, theta={theta}, tau={tau}")));
    }
    Ok(())
}

/// Builds `a, b, r` for `j = 1..=j_max`.
pub fn build_schedule(eta: f64, theta: f64, tau: f64, j_max: usize, delta: Option<f64>) -> Result<BlockSchedule> {
    check_gate(eta, theta, tau)?;
    if j_max == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one block".into()));
    }
    let mut s = BlockSchedule {
        eta,
        theta,
        tau,
        a: Vec::with_capacity(j_max),
        b: Vec::with_capacity(j_max),
        r: Vec::with_capacity(j_max),
        exceeds_delta_bound: delta.map(|d| tau >= d / 4.0),
    };
    s.a.push(0);
    s.b.push(1);
    s.r.push(1);
    for j in 2..=j_max as u64 {
        let a = s.b[j as usize - 2] + floor_pow(j - 1, theta);
        s.a.push(a);
        s.b.push(a + floor_pow(j, tau));
        s.r.push(floor_pow(j, eta));
    }
    Ok(s)
}

/// Shortest schedule on which `nu(t)` is defined.
pub fn schedule_covering(eta: f64, theta: f64, tau: f64, t: u64, delta: Option<f64>) -> Result<BlockSchedule> {
    check_gate(eta, theta, tau)?;
    // big blocks have length at least one, so t + 1 blocks always suffice
    let mut j = 16usize;
    loop {
        let s = build_schedule(eta, theta, tau, j, delta)?;
        if s.next_start(j) > t {
            return Ok(s);
        }
        j = (j * 2).min(t as usize + 1);
    }
}

impl BlockSchedule {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `a(j)`, 1-based.
    pub fn start(&self, j: usize) -> u64 {
        self.a[j - 1]
    }

    /// `b(j)`, 1-based.
    pub fn big_end(&self, j: usize) -> u64 {
        self.b[j - 1]
    }

    /// `a(j+1) = b(j) + floor(j^theta)`, defined for `j <= J`.
    pub fn next_start(&self, j: usize) -> u64 {
        self.b[j - 1] + floor_pow(j as u64, self.theta)
    }

    /// `nu(t) = max{j : b(j) + floor(j^theta) <= t}`, zero if no block fits.
    pub fn nu(&self, t: u64) -> Result<usize> {
        let last = self.len();
        if last == 0 || self.next_start(last) <= t {
            return Err(Error::ScheduleTooShort(t));
        }
        // next_start is strictly increasing in j
        let (mut lo, mut hi) = (0usize, last);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.next_start(mid) <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Ok(lo)
    }

    /// Rows `j,a,b,r`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["j", "a", "b", "r"]).map_err(io)?;
        for k in 0..self.len() {
            w.write_record([(k + 1).to_string(), self.a[k].to_string(), self.b[k].to_string(), self.r[k].to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Big-block sums `V_i(j)` and small-block sums `W_i(j)` for
/// `j = 1..=j_max`, where `V_i(j)` collects `F_i(X(l), ..., X(il))` over
/// `a(j) < il <= b(j)` and `W_i(j)` over `b(j) < il <= a(j+1)`.
pub fn block_sums(
    d: &DecomposedFunction,
    traj: &crate::process::Trajectory,
    schedule: &BlockSchedule,
    i: usize,
    j_max: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if i == 0 || i > d.arity() {
        return Err(Error::InvalidArgument(format!("component {i} outside 1..={}", d.arity())));
    }
    if j_max > schedule.len() {
        return Err(Error::InvalidArgument(format!("schedule has {} blocks, {j_max} requested", schedule.len())));
    }
    if j_max == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let horizon = schedule.next_start(j_max) as usize;
    let terms = component_terms(d, traj, i, horizon / i)?;
    Ok(sums_from_terms(&terms, schedule, i, j_max))
}

/// Block sums from the summands `terms[l - 1] = F_i(X(l), ..., X(il))`.
fn sums_from_terms(terms: &[f64], schedule: &BlockSchedule, i: usize, j_max: usize) -> (Vec<f64>, Vec<f64>) {
    let span = |lo: u64, hi: u64| -> f64 {
        // indices l with lo < il <= hi
        let first = lo as usize / i + 1;
        let last = hi as usize / i;
        (first..=last).map(|l| terms[l - 1]).collect::<CompensatedSum>().value()
    };
    let v = (1..=j_max).map(|j| span(schedule.start(j), schedule.big_end(j))).collect();
    let w = (1..=j_max).map(|j| span(schedule.big_end(j), schedule.next_start(j))).collect();
    (v, w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentNegligibility {
    pub i: usize,
    /// Replica RMS of `t^{-1/2} |sum_{j <= nu(t)} W_i(j)|` per grid point.
    pub rms: Vec<f64>,
    /// Log-log slope of `rms` against `t`; absent when some RMS vanishes.
    pub slope: Option<f64>,
    /// Jackknife standard error of the slope over replicas.
    pub slope_se: Option<f64>,
}

impl ComponentNegligibility {
    /// Slope below zero by at least `k` standard errors.
    pub fn decays(&self, k: f64) -> bool {
        matches!((self.slope, self.slope_se), (Some(s), Some(se)) if s + k * se < 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegligibilityReport {
    pub eta: f64,
    pub theta: f64,
    pub tau: f64,
    pub t_grid: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    pub components: Vec<ComponentNegligibility>,
    pub exceeds_delta_bound: Option<bool>,
}

/// Replica study of the small-block mass `t^{-1/2} sum_{j <= nu(t)} W_i(j)`
/// for every component `i`.
pub fn negligibility_diagnostic(
    d: &DecomposedFunction,
    model: &ProcessModel,
    schedule: &BlockSchedule,
    t_grid: &[u64],
    replicas: usize,
    seed: u64,
) -> Result<NegligibilityReport> {
    if replicas < MIN_REPLICAS {
        return Err(Error::TooFewSamples { needed: MIN_REPLICAS, got: replicas });
    }
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[0] >= w[1]) || t_grid[0] == 0 {
        return Err(Error::BadGrid("time grid must be positive and strictly increasing".into()));
    }
    let t_max = *t_grid.last().expect("nonempty grid");
    let nus: Vec<usize> = t_grid.iter().map(|&t| schedule.nu(t)).collect::<Result<_>>()?;
    let j_top = *nus.last().expect("nonempty grid");
    let l = d.arity();

    // per replica, per component, per grid point: the scaled squared mass
    let runs: Vec<Result<Vec<Vec<f64>>>> = map_replicas(replicas, seed, |_, rng| {
        let traj = model.sample_with(t_max as usize, rng)?;
        (1..=l)
            .map(|i| {
                let (_, w) = if j_top == 0 { (Vec::new(), Vec::new()) } else {
                    let horizon = schedule.next_start(j_top) as usize;
                    let terms = component_terms(d, &traj, i, horizon / i)?;
                    sums_from_terms(&terms, schedule, i, j_top)
                };
                let mut prefix = Vec::with_capacity(w.len() + 1);
                let mut acc = CompensatedSum::new();
                prefix.push(0.0);
                for x in &w {
                    acc.add(*x);
                    prefix.push(acc.value());
                }
                Ok(t_grid
                    .iter()
                    .zip(&nus)
                    .map(|(&t, &nu)| prefix[nu] * prefix[nu] / t as f64)
                    .collect())
            })
            .collect()
    });
    let runs: Vec<Vec<Vec<f64>>> = runs.into_iter().collect::<Result<_>>()?;

    let log_t: Vec<f64> = t_grid.iter().map(|&t| (t as f64).ln()).collect();
    let components = (0..l)
        .map(|c| {
            let rms_without = |skip: Option<usize>| -> Vec<f64> {
                (0..t_grid.len())
                    .map(|g| {
                        let mut acc = CompensatedSum::new();
                        let mut count = 0usize;
                        for (r, run) in runs.iter().enumerate() {
                            if Some(r) != skip {
                                acc.add(run[c][g]);
                                count += 1;
                            }
                        }
                        (acc.value() / count as f64).sqrt()
                    })
                    .collect()
            };
            let rms = rms_without(None);
            let (slope, slope_se) = if rms.iter().all(|v| *v > 0.0) {
                let slope_of = |skip: Option<usize>| {
                    let ys: Vec<f64> = rms_without(skip).iter().map(|v| v.ln()).collect();
                    ols_slope(&log_t, &ys)
                };
                let (s, se) = jackknife(replicas, slope_of);
                (Some(s), Some(se))
            } else {
                (None, None)
            };
            ComponentNegligibility { i: c + 1, rms, slope, slope_se }
        })
        .collect();

    Ok(NegligibilityReport {
        eta: schedule.eta,
        theta: schedule.theta,
        tau: schedule.tau,
        t_grid: t_grid.to_vec(),
        replicas,
        seed,
        components,
        exceeds_delta_bound: schedule.exceeds_delta_bound,
    })
}

/// The dyadic grid `2^lo, ..., 2^hi`.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|k| 1u64 << k).collect()
}
