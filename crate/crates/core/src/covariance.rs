//! The limiting covariance `D_ij = lim t^{-1} E Psi_i(t) Psi_j(t)`.
//!
//! The exact route evaluates the series
//! `D_ij = (v/(ij)) sum_u a_ij(u, 2u, ..., vu)` with `v = gcd(i, j)`,
//! `i = v i'`, `j = v j'`, where `a_ij` integrates `F_i(x) F_j(y)` with the
//! coordinates `x_{eta i'}` and `y_{eta j'}` coupled through the stationary
//! pair law at lag `eta u` (the diagonal coupling for `u = 0`) and every other
//! coordinate integrated against `mu`. Here the pair law `mu_m` is the law of
//! `(X(n+m), X(n))`, so the `x` coordinate is the later one when `u > 0`.
//!
//! The series is truncated at `|u| <= U` and the remainder estimated by
//! geometric extrapolation of the last ten shells. The empirical route
//! averages `Psi_i(t) Psi_j(t) / t` over independent replicas.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::DecomposedFunction;
use crate::process::{PairLaw, ProcessModel};
use crate::replica::map_replicas;
use crate::stats::{jackknife, mean, CompensatedSum};
use crate::sums::psi_terminal;

/// Eigenvalues below this are a construction error; eigenvalues in
/// `[PSD_TOL, 0)` are clipped to zero.
pub const PSD_TOL: f64 = -1e-8;
/// Number of trailing shells used for the tail extrapolation.
pub const TAIL_SHELLS: usize = 10;
/// Minimum horizon and replica count for [`empirical_d`].
pub const MIN_EMPIRICAL_T: usize = 1_000;
pub const MIN_EMPIRICAL_REPLICAS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceProvenance {
    ExactSeries,
    Empirical,
}

/// How the truncated remainder of the series was bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    /// `s_U r / (1 - r)` with `r` the mean decay ratio of the last shells.
    Geometric,
    /// The last shells sit at rounding level; their sum is reported.
    NoiseFloor,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub matrix: Vec<Vec<f64>>,
    pub truncation: Option<usize>,
    pub tail_estimate: f64,
    pub tail_method: TailMethod,
    pub provenance: CovarianceProvenance,
    /// Jackknife standard errors (empirical estimates only).
    pub std_errors: Option<Vec<Vec<f64>>>,
    /// Whether small negative eigenvalues were clipped.
    pub psd_clipped: bool,
    /// Horizon and replica count of an empirical estimate.
    pub horizon: Option<usize>,
    pub replicas: Option<usize>,
}

impl CovarianceModel {
    /// A model given directly by its matrix, e.g. a known closed form.
    pub fn from_matrix(matrix: Vec<Vec<f64>>) -> Self {
        Self {
            matrix,
            truncation: None,
            tail_estimate: 0.0,
            tail_method: TailMethod::NotApplicable,
            provenance: CovarianceProvenance::ExactSeries,
            std_errors: None,
            psd_clipped: false,
            horizon: None,
            replicas: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    /// `D_ij` with 1-based indices.
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.matrix[i - 1][j - 1]
    }

    /// `R(s, t) = sum_ij D_ij min(i s, j t)`.
    pub fn kernel_r(&self, s: f64, t: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for (i, row) in self.matrix.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                acc.add(d * ((i + 1) as f64 * s).min((j + 1) as f64 * t));
            }
        }
        acc.value()
    }

    /// `R(1, 1)`, the variance of `Q(1)`.
    pub fn r11(&self) -> f64 {
        self.kernel_r(1.0, 1.0)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let l = self.dim();
        DMatrix::from_fn(l, l, |i, j| self.matrix[i][j])
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Free function form of [`CovarianceModel::kernel_r`].
pub fn kernel_r(c: &CovarianceModel, s: f64, t: f64) -> f64 {
    c.kernel_r(s, t)
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `F_k` integrated against `mu` in every coordinate except the paired ones
/// `step, 2 step, ..., v step`; result indexed over `s^v` with the first
/// pair most significant.
fn reduce_component(table: &[f64], probs: &[f64], k: usize, step: usize) -> Vec<f64> {
    let s = probs.len();
    let v = k / step;
    let mut out = vec![CompensatedSum::new(); s.pow(v as u32)];
    let mut digits = vec![0usize; k];
    for &value in table {
        let mut weight = 1.0;
        let mut idx = 0usize;
        for (pos, &d) in digits.iter().enumerate() {
            if (pos + 1) % step == 0 {
                idx = idx * s + d;
            } else {
                weight *= probs[d];
            }
        }
        out[idx].add(value * weight);
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < s {
                break;
            }
            *d = 0;
        }
    }
    out.into_iter().map(|c| c.value()).collect()
}

/// Applies `m` (an `s x s` kernel) along axis `axis` of a tensor over `s^v`:
/// `out[.., a, ..] = sum_b m[a][b] g[.., b, ..]`.
fn apply_axis(g: &[f64], m: &[f64], s: usize, v: usize, axis: usize) -> Vec<f64> {
    let inner = s.pow((v - 1 - axis) as u32);
    let outer = g.len() / (inner * s);
    let mut out = vec![0.0; g.len()];
    for o in 0..outer {
        for a in 0..s {
            for r in 0..inner {
                let mut acc = CompensatedSum::new();
                for b in 0..s {
                    acc.add(m[a * s + b] * g[(o * s + b) * inner + r]);
                }
                out[(o * s + a) * inner + r] = acc.value();
            }
        }
    }
    out
}

/// Evaluates `a_ij(u)` sums for one `(i, j)` pair, reusing the reduced
/// component tables.
struct PairTerm {
    s: usize,
    v: usize,
    fi: Vec<f64>,
    fj: Vec<f64>,
}

impl PairTerm {
    fn new(d: &DecomposedFunction, i: usize, j: usize) -> Result<Self> {
        let law = d
            .finite_law()
            .ok_or_else(|| Error::UnsupportedModel("the covariance series needs a finite alphabet".into()))?;
        let l = d.arity();
        if !(1..=l).contains(&i) || !(1..=l).contains(&j) {
            return Err(Error::ArityMismatch { expected: l, got: i.max(j) });
        }
        let v = gcd(i, j);
        let table = |k| d.component_table(k).expect("tabulated component");
        Ok(Self {
            s: law.len(),
            v,
            fi: reduce_component(table(i), &law.probs, i, i / v),
            fj: reduce_component(table(j), &law.probs, j, j / v),
        })
    }

    /// `a_ij(u, ..., vu)`; `laws[m]` must be the law of `(X(n), X(n+m))`.
    fn eval(&self, u: i64, laws: &[PairLaw]) -> Result<f64> {
        let mut g = self.fj.clone();
        for eta in 1..=self.v {
            let lag = (eta as i64 * u).unsigned_abs() as usize;
            let law = laws.get(lag).ok_or_else(|| {
                Error::InvalidArgument(format!("pair law for lag {lag} was not supplied"))
            })?;
            if law.size() != self.s {
                return Err(Error::InvalidArgument("pair law support differs from the alphabet".into()));
            }
            // x is the later coordinate for u > 0
            let kernel = if u > 0 { law.swapped().table } else { law.table.clone() };
            g = apply_axis(&g, &kernel, self.s, self.v, eta - 1);
        }
        Ok(self.fi.iter().zip(&g).map(|(a, b)| a * b).collect::<CompensatedSum>().value())
    }
}

/// `a_ij(u, 2u, ..., vu)` for a tabulated decomposition. `pair_laws[m]` is
/// the law of `(X(n), X(n+m))` and must cover lags up to `gcd(i, j) |u|`.
pub fn a_term(d: &DecomposedFunction, i: usize, j: usize, u: i64, pair_laws: &[PairLaw]) -> Result<f64> {
    PairTerm::new(d, i, j)?.eval(u, pair_laws)
}

/// Tail bound from the absolute shell contributions `shells[0..=U]`, using
/// up to the last ten shells with `u >= 1`.
fn tail_estimate(shells: &[f64]) -> (f64, TailMethod) {
    let n = shells.len();
    let last = &shells[n.saturating_sub(TAIL_SHELLS).max(1).min(n)..];
    let scale = shells.iter().fold(0.0f64, |m, s| m.max(*s));
    let floor = 1e3 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    if last.iter().all(|s| *s <= floor) {
        return (last.iter().sum(), TailMethod::NoiseFloor);
    }
    let k = last.len();
    if k < 2 || !(last[0] > 0.0) {
        return (f64::INFINITY, TailMethod::Geometric);
    }
    let r = (last[k - 1] / last[0]).powf(1.0 / (k - 1) as f64);
    if r >= 1.0 {
        return (f64::INFINITY, TailMethod::Geometric);
    }
    (last[k - 1] * r / (1.0 - r), TailMethod::Geometric)
}

/// Checks symmetry and nonnegative definiteness, clipping eigenvalues in
/// `[PSD_TOL, 0)`.
fn psd_gate(matrix: Vec<Vec<f64>>) -> Result<(Vec<Vec<f64>>, bool)> {
    let l = matrix.len();
    let m = DMatrix::from_fn(l, l, |i, j| matrix[i][j]);
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    if min < PSD_TOL {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    if min >= 0.0 {
        return Ok((matrix, false));
    }
    let clipped = eig.eigenvalues.map(|e| e.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let out = (0..l)
        .map(|i| (0..l).map(|j| 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)])).collect())
        .collect();
    Ok((out, true))
}

/// The truncated series for `D`, with tail estimate and PSD check.
pub fn limiting_d(d: &DecomposedFunction, model: &ProcessModel, truncation: usize, tail_tol: f64) -> Result<CovarianceModel> {
    if truncation < 1 {
        return Err(Error::InvalidArgument("truncation radius must be at least 1".into()));
    }
    if !model.has_exact_pair_laws() {
        return Err(Error::UnsupportedModel(format!("{} has no exact pair laws", model.label())));
    }
    let l = d.arity();
    let laws = model.pair_laws(l * truncation)?;
    let mut matrix = vec![vec![0.0; l]; l];
    let mut tail = 0.0f64;
    let mut method = TailMethod::NoiseFloor;
    for i in 1..=l {
        for j in i..=l {
            let term = PairTerm::new(d, i, j)?;
            let scale = term.v as f64 / (i * j) as f64;
            // Shells are independent; summing them in u order keeps runs reproducible.
            let shells: Vec<(f64, f64)> = (0..=truncation as i64)
                .map(|u| {
                    if u == 0 {
                        term.eval(0, &laws).map(|a| (a, 0.0))
                    } else {
                        Ok((term.eval(u, &laws)?, term.eval(-u, &laws)?))
                    }
                })
                .collect::<Result<_>>()?;
            let mut acc = CompensatedSum::new();
            for (a, b) in &shells {
                acc.add(*a);
                acc.add(*b);
            }
            let abs: Vec<f64> = shells.iter().map(|(a, b)| scale * (a.abs() + b.abs())).collect();
            let (t, m) = tail_estimate(&abs);
            if t > tail {
                tail = t;
            }
            if m == TailMethod::Geometric {
                method = TailMethod::Geometric;
            }
            matrix[i - 1][j - 1] = scale * acc.value();
            matrix[j - 1][i - 1] = matrix[i - 1][j - 1];
        }
    }
    if !(tail <= tail_tol) {
        return Err(Error::TailNotConverged { tail, tol: tail_tol });
    }
    let (matrix, psd_clipped) = psd_gate(matrix)?;
    Ok(CovarianceModel {
        matrix,
        truncation: Some(truncation),
        tail_estimate: tail,
        tail_method: method,
        provenance: CovarianceProvenance::ExactSeries,
        std_errors: None,
        psd_clipped,
        horizon: None,
        replicas: None,
    })
}

/// Replica estimate of `D_ij` as the mean of `Psi_i(t) Psi_j(t) / t`, with
/// jackknife standard errors.
pub fn empirical_d(
    model: &ProcessModel,
    d: &DecomposedFunction,
    t: usize,
    replicas: usize,
    seed: u64,
) -> Result<CovarianceModel> {
    if t < MIN_EMPIRICAL_T {
        return Err(Error::InvalidArgument(format!("empirical D needs t >= {MIN_EMPIRICAL_T}, got {t}")));
    }
    if replicas < MIN_EMPIRICAL_REPLICAS {
        return Err(Error::TooFewSamples { needed: MIN_EMPIRICAL_REPLICAS, got: replicas });
    }
    let terminals = map_replicas(replicas, seed, |_, rng| {
        let traj = model.sample_with(t, rng)?;
        psi_terminal(d, &traj, t)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(empirical_from_terminals(&terminals, t))
}

/// Builds the empirical covariance from per-replica `(Psi_1(t), ..., Psi_l(t))`.
pub fn empirical_from_terminals(terminals: &[Vec<f64>], t: usize) -> CovarianceModel {
    let l = terminals.first().map_or(0, Vec::len);
    let tf = t as f64;
    let mut matrix = vec![vec![0.0; l]; l];
    let mut se = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in i..l {
            let products: Vec<f64> = terminals.iter().map(|p| p[i] * p[j] / tf).collect();
            let (est, err) = jackknife(products.len(), |skip| match skip {
                None => mean(&products),
                Some(r) => {
                    let kept: CompensatedSum =
                        products.iter().enumerate().filter(|(k, _)| *k != r).map(|(_, v)| *v).collect();
                    kept.value() / (products.len() - 1) as f64
                }
            });
            matrix[i][j] = est;
            matrix[j][i] = est;
            se[i][j] = err;
            se[j][i] = err;
        }
    }
    CovarianceModel {
        matrix,
        truncation: None,
        tail_estimate: 0.0,
        tail_method: TailMethod::NotApplicable,
        provenance: CovarianceProvenance::Empirical,
        std_errors: Some(se),
        psd_clipped: false,
        horizon: Some(t),
        replicas: Some(terminals.len()),
    }
}
