//! Dependence coefficients of finite stationary Markov chains.
//!
//! For a Markov chain the coefficients between the past up to time 0 and
//! the future from time `n` reduce to the two-point law of `(X_0, X_n)`,
//! so everything here is a function of `P^n` and `pi`:
//!
//! * `psi(n) = max_{x,y} |P^n(x,y) / pi(y) - 1|`
//! * `phi(n) = max_x (1/2) sum_y |P^n(x,y) - pi(y)|`
//! * `rho(n)`, the largest singular value of
//!   `pi(x)^{1/2} (P^n(x,y) - pi(y)) pi(y)^{-1/2}`
//! * `alpha(n) = max_{A,B} |sum_{x in A, y in B} pi(x) (P^n(x,y) - pi(y))|`
//!
//! The approximation rates `beta` vanish because every implemented
//! observable is a function of the current state.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::ProcessModel;

/// Largest state space for exact subset enumeration.
pub const MAX_EXACT_STATES: usize = 20;
/// Minimum profile depth for the summability check.
pub const MIN_DEPTH: usize = 50;
const NOISE_FLOOR: f64 = 1e-13;

fn validate(p: &[Vec<f64>], pi: &[f64]) -> Result<()> {
    if p.len() != pi.len() || p.iter().any(|r| r.len() != pi.len()) {
        return Err(Error::InvalidArgument("transition matrix and stationary law differ in size".into()));
    }
    if let Some(y) = pi.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::ZeroMassState(y));
    }
    Ok(())
}

fn identity(s: usize) -> Vec<Vec<f64>> {
    (0..s).map(|i| (0..s).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn multiply(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = b.len();
    a.iter().map(|row| (0..s).map(|y| (0..s).map(|z| row[z] * b[z][y]).sum()).collect()).collect()
}

fn rows_identical(p: &[Vec<f64>]) -> bool {
    p.iter().all(|r| r == &p[0])
}

/// `P^n`. A matrix with identical rows is idempotent, which keeps
/// independent chains exact.
pub fn matrix_power(p: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    if n == 0 {
        return identity(p.len());
    }
    if rows_identical(p) {
        return p.to_vec();
    }
    let mut out = p.to_vec();
    for _ in 1..n {
        out = multiply(&out, p);
    }
    out
}

fn psi_of(pn: &[Vec<f64>], pi: &[f64]) -> f64 {
    pn.iter()
        .flat_map(|row| row.iter().zip(pi).map(|(v, w)| (v / w - 1.0).abs()))
        .fold(0.0, f64::max)
}

fn phi_of(pn: &[Vec<f64>], pi: &[f64]) -> f64 {
    pn.iter()
        .map(|row| 0.5 * row.iter().zip(pi).map(|(v, w)| (v - w).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn rho_of(pn: &[Vec<f64>], pi: &[f64]) -> f64 {
    let s = pi.len();
    let m = DMatrix::from_fn(s, s, |x, y| pi[x].sqrt() * (pn[x][y] - pi[y]) / pi[y].sqrt());
    m.singular_values().iter().fold(0.0, |a, b| a.max(*b))
}

/// `c[x][y] = pi(x) (P^n(x,y) - pi(y))`.
fn deviations(pn: &[Vec<f64>], pi: &[f64]) -> Vec<Vec<f64>> {
    pn.iter()
        .zip(pi)
        .map(|(row, px)| row.iter().zip(pi).map(|(v, w)| px * (v - w)).collect())
        .collect()
}

/// `max_A sum_y (sum_{x in A} c[x][y])^+` over subsets in Gray-code order.
fn alpha_of(pn: &[Vec<f64>], pi: &[f64]) -> f64 {
    let c = deviations(pn, pi);
    let s = pi.len();
    let mut col = vec![0.0; s];
    let mut inside = vec![false; s];
    let mut best = 0.0f64;
    // A and its complement give opposite column sums, so half the cube suffices
    let half = 1u64 << (s - 1);
    for step in 1..half {
        let flip = step.trailing_zeros() as usize;
        let sign = if inside[flip] { -1.0 } else { 1.0 };
        inside[flip] = !inside[flip];
        for (acc, v) in col.iter_mut().zip(&c[flip]) {
            *acc += sign * v;
        }
        best = best.max(col.iter().map(|v| v.max(0.0)).sum());
    }
    // the last state on its own
    best.max(c[s - 1].iter().map(|v| v.max(0.0)).sum())
}

/// `sup_{|g| <= 1} E|E[g(X_n) | X_0] - E g|`, attained on `g in {-1, 1}^s`.
fn varpi_inf_one_of(pn: &[Vec<f64>], pi: &[f64]) -> f64 {
    let s = pi.len();
    let dev: Vec<Vec<f64>> = pn.iter().map(|row| row.iter().zip(pi).map(|(v, w)| v - w).collect()).collect();
    let mut best = 0.0f64;
    for mask in 0..(1u64 << (s - 1)) {
        let g = |y: usize| if mask >> y & 1 == 1 { -1.0 } else { 1.0 };
        let val: f64 = dev
            .iter()
            .zip(pi)
            .map(|(row, px)| px * row.iter().enumerate().map(|(y, d)| d * g(y)).sum::<f64>().abs())
            .sum();
        best = best.max(val);
    }
    best
}

fn alpha_bounds_of(pn: &[Vec<f64>], pi: &[f64]) -> (f64, f64) {
    let c = deviations(pn, pi);
    let singles = c.iter().map(|row| row.iter().map(|v| v.max(0.0)).sum::<f64>()).fold(0.0, f64::max);
    let upper = 0.5 * c.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>();
    (singles, upper)
}

pub fn psi_coeff(p: &[Vec<f64>], pi: &[f64], n: usize) -> Result<f64> {
    validate(p, pi)?;
    Ok(psi_of(&matrix_power(p, n), pi))
}

pub fn phi_coeff(p: &[Vec<f64>], pi: &[f64], n: usize) -> Result<f64> {
    validate(p, pi)?;
    Ok(phi_of(&matrix_power(p, n), pi))
}

pub fn rho_coeff(p: &[Vec<f64>], pi: &[f64], n: usize) -> Result<f64> {
    validate(p, pi)?;
    Ok(rho_of(&matrix_power(p, n), pi))
}

/// Exact `alpha(n)` for at most [`MAX_EXACT_STATES`] states.
pub fn alpha_coeff(p: &[Vec<f64>], pi: &[f64], n: usize) -> Result<f64> {
    validate(p, pi)?;
    if pi.len() > MAX_EXACT_STATES {
        return Err(Error::StateSpaceTooLarge(pi.len()));
    }
    Ok(alpha_of(&matrix_power(p, n), pi))
}

/// `(lower, upper)` bracket for `alpha(n)` on any state space.
pub fn alpha_bounds(p: &[Vec<f64>], pi: &[f64], n: usize) -> Result<(f64, f64)> {
    validate(p, pi)?;
    Ok(alpha_bounds_of(&matrix_power(p, n), pi))
}

/// `varpi_{inf,1}(n)`, which equals `4 alpha(n)`.
pub fn varpi_inf_one(p: &[Vec<f64>], pi: &[f64], n: usize) -> Result<f64> {
    validate(p, pi)?;
    if pi.len() > MAX_EXACT_STATES {
        return Err(Error::StateSpaceTooLarge(pi.len()));
    }
    Ok(varpi_inf_one_of(&matrix_power(p, n), pi))
}

/// Approximation rate `beta_p(n)`; zero since `X(m)` is a function of the
/// state at time `m` for every implemented model.
pub fn beta_coeff(_model: &ProcessModel, _p: f64, _n: usize) -> f64 {
    0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub n: Vec<usize>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub rho: Vec<f64>,
    /// Exact values, or the lower end of the bracket for large state spaces.
    pub alpha: Vec<f64>,
    /// Upper end of the bracket, present when `alpha` is not exact.
    pub alpha_upper: Option<Vec<f64>>,
    /// `varpi_{inf,1}`, present when `alpha` is exact.
    pub varpi_inf_one: Option<Vec<f64>>,
    pub beta: Vec<f64>,
    /// `(theta, E|X|^theta)`; `None` when the value overflows.
    pub moments: Vec<(f64, Option<f64>)>,
    /// Envelope decay rate `max_n (psi(n)/psi(1))^{1/(n-1)}` over values
    /// above rounding level.
    pub lambda: f64,
}

/// Coefficients for `n = 0..=depth` and the requested marginal moments.
pub fn mixing_profile(model: &ProcessModel, depth: usize, thetas: &[f64]) -> Result<MixingProfile> {
    let (p, pi) = model
        .chain()
        .ok_or_else(|| Error::UnsupportedModel(format!("{} is not a finite chain", model.label())))?;
    let mut pi = pi.to_vec();
    if rows_identical(p) {
        pi.clone_from(&p[0]);
    }
    validate(p, &pi)?;
    let exact = pi.len() <= MAX_EXACT_STATES;
    let mut prof = MixingProfile {
        n: (0..=depth).collect(),
        psi: Vec::new(),
        phi: Vec::new(),
        rho: Vec::new(),
        alpha: Vec::new(),
        alpha_upper: (!exact).then(Vec::new),
        varpi_inf_one: exact.then(Vec::new),
        beta: vec![0.0; depth + 1],
        moments: Vec::new(),
        lambda: 0.0,
    };
    let mut pn = identity(pi.len());
    for n in 0..=depth {
        if n == 1 {
            pn = p.to_vec();
        } else if n > 1 && !rows_identical(p) {
            pn = multiply(&pn, p);
        }
        prof.psi.push(psi_of(&pn, &pi));
        prof.phi.push(phi_of(&pn, &pi));
        prof.rho.push(rho_of(&pn, &pi));
        if exact {
            prof.alpha.push(alpha_of(&pn, &pi));
            prof.varpi_inf_one.as_mut().expect("exact").push(varpi_inf_one_of(&pn, &pi));
        } else {
            let (lo, hi) = alpha_bounds_of(&pn, &pi);
            prof.alpha.push(lo);
            prof.alpha_upper.as_mut().expect("bracket").push(hi);
        }
    }
    prof.lambda = envelope_rate(&prof.psi);
    let law = model.marginal().as_finite().expect("finite chain marginal");
    prof.moments = thetas
        .iter()
        .map(|&t| {
            let v = law.moment(t);
            (t, v.is_finite().then_some(v))
        })
        .collect();
    Ok(prof)
}

fn envelope_rate(psi: &[f64]) -> f64 {
    if psi.len() < 3 || !(psi[1] > NOISE_FLOOR) {
        return 0.0;
    }
    psi.iter()
        .enumerate()
        .skip(2)
        .filter(|(_, v)| **v > NOISE_FLOOR)
        .map(|(n, v)| (v / psi[1]).powf(1.0 / (n - 1) as f64))
        .fold(0.0, f64::max)
}

impl MixingProfile {
    /// Rows `n,psi,phi,rho,alpha`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["n", "psi", "phi", "rho", "alpha"]).map_err(io)?;
        for k in 0..self.n.len() {
            w.write_record([
                self.n[k].to_string(),
                format!("{:e}", self.psi[k]),
                format!("{:e}", self.phi[k]),
                format!("{:e}", self.rho[k]),
                format!("{:e}", self.alpha[k]),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn depth(&self) -> usize {
        self.n.len().saturating_sub(1)
    }

    /// Ordering checks `psi >= 2 phi >= 4 alpha` and `psi >= rho >= 4 alpha`
    /// at every depth, within `tol`.
    pub fn ordering_holds(&self, tol: f64) -> bool {
        (0..self.n.len()).all(|k| {
            let four_alpha = 4.0 * self.alpha[k];
            self.psi[k] + tol >= 2.0 * self.phi[k]
                && 2.0 * self.phi[k] + tol >= four_alpha
                && self.psi[k] + tol >= self.rho[k]
                && self.rho[k] + tol >= four_alpha
        })
    }
}

/// Parameters `(p, q, delta, m, iota, kappa, d)`; use large finite values
/// as proxies for infinity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionParams {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub m: f64,
    pub iota: f64,
    pub kappa: f64,
    pub d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub status: ClauseStatus,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub params: AssumptionParams,
    pub clauses: Vec<Clause>,
    pub status: ClauseStatus,
}

fn clause(name: &str, status: ClauseStatus, value: Option<f64>, detail: String) -> Clause {
    Clause { name: name.into(), status, value, detail }
}

fn pass_fail(ok: bool) -> ClauseStatus {
    if ok {
        ClauseStatus::Pass
    } else {
        ClauseStatus::Fail
    }
}

/// Relative size of the extrapolated tail below which a partial sum counts
/// as converged.
pub const SUMMABILITY_TOL: f64 = 1e-2;

/// Checks each clause of the moment and mixing conditions. The mixing series
/// uses `psi`, which bounds `varpi_{q,p}` for every `q >= 1`.
pub fn check_assumption(profile: &MixingProfile, params: &AssumptionParams) -> AssumptionReport {
    let AssumptionParams { p, q, delta, m, iota, kappa, d } = *params;
    let mut clauses = Vec::new();

    let gap = kappa - d / p;
    clauses.push(clause("delta_below_kappa_minus_d_over_p", pass_fail(delta > 0.0 && delta < gap), Some(gap), format!("delta={delta}, kappa-d/p={gap}")));

    let partial: f64 = profile.psi.iter().enumerate().map(|(n, v)| n as f64 * v).sum();
    let depth = profile.depth();
    let last = profile.psi.last().copied().unwrap_or(0.0);
    let lam = profile.lambda;
    let mixing = if lam >= 1.0 - 1e-12 && last > NOISE_FLOOR {
        clause("mixing_series", ClauseStatus::Fail, Some(partial), "no decay of psi".into())
    } else {
        let tail = if last <= NOISE_FLOOR {
            0.0
        } else {
            let nf = depth as f64;
            last * (nf * lam / (1.0 - lam) + lam / ((1.0 - lam) * (1.0 - lam)))
        };
        let converged = tail <= SUMMABILITY_TOL * partial.max(1.0);
        let status = if depth < MIN_DEPTH || !converged { ClauseStatus::Inconclusive } else { ClauseStatus::Pass };
        clause("mixing_series", status, Some(partial + tail), format!("partial sum {partial:e} to depth {depth}, extrapolated tail {tail:e} at rate {lam}"))
    };
    clauses.push(mixing);

    clauses.push(clause("approximation_series", ClauseStatus::Pass, Some(0.0), "beta vanishes identically".into()));

    for theta in [m, 2.0 * q * (iota + 2.0)] {
        let v = profile.moments.iter().find(|(t, _)| *t == theta).and_then(|(_, v)| *v);
        clauses.push(clause(
            "moment",
            ClauseStatus::Pass,
            v,
            format!("moment of order {theta} is finite on a finite alphabet"),
        ));
    }

    let lhs = 1.0 / (2.0 + delta);
    let rhs = 1.0 / p + (iota + 2.0) / m + delta / q;
    clauses.push(clause("exponent_inequality", pass_fail(lhs >= rhs), Some(lhs - rhs), format!("1/(2+delta)={lhs}, rhs={rhs}")));

    let status = if clauses.iter().any(|c| c.status == ClauseStatus::Fail) {
        ClauseStatus::Fail
    } else if clauses.iter().any(|c| c.status == ClauseStatus::Inconclusive) {
        ClauseStatus::Inconclusive
    } else {
        ClauseStatus::Pass
    };
    AssumptionReport { params: *params, clauses, status }
}

/// First parameter tuple on a fixed grid for which every clause passes.
pub fn search_parameters(profile: &MixingProfile, iota: f64, kappa: f64, d: f64) -> Option<AssumptionReport> {
    const EXPONENTS: [f64; 6] = [4.0, 8.0, 16.0, 64.0, 1e3, 1e6];
    const DELTAS: [f64; 5] = [0.5, 0.25, 0.1, 0.05, 0.01];
    for &delta in &DELTAS {
        for &p in &EXPONENTS {
            for &q in &EXPONENTS {
                for &m in &EXPONENTS {
                    let params = AssumptionParams { p, q, delta, m, iota, kappa, d };
                    let report = check_assumption(profile, &params);
                    if report.status == ClauseStatus::Pass {
                        return Some(report);
                    }
                }
            }
        }
    }
    None
}

/// Moment orders [`check_assumption`] looks up for the given parameters.
pub fn required_moments(params: &AssumptionParams) -> Vec<f64> {
    vec![params.m, 2.0 * params.q * (params.iota + 2.0)]
}
