//! Paths built from a trajectory: the nonconventional sum `Xi`, the
//! component sums `Psi_i`, the interpolated normalized path `Q_n`, the LIL
//! normalization `f_n(1)` and the occupation fraction `L_n`.
//!
//! `Xi(0) = 0` by convention; every path returned here starts at `t = 0`.
//! All partial sums use compensated summation.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{DecomposedFunction, FunctionSpec};
use crate::process::Trajectory;
use crate::stats::CompensatedSum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PathKind {
    Xi,
    Psi(usize),
    Qn(u64),
    Lil,
}

/// Where a path came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub model: String,
    pub function: String,
    pub seed: u64,
}

/// A path on a strictly increasing time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub kind: PathKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl PathSample {
    /// Path on the integer grid `0, 1, ..., values.len() - 1`.
    pub fn on_integers(kind: PathKind, values: Vec<f64>) -> Self {
        let times = (0..values.len()).map(|t| t as f64).collect();
        Self { kind, times, values, provenance: None }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at integer time `t` on an integer grid starting at 0.
    pub fn at(&self, t: usize) -> Option<f64> {
        self.values.get(t).copied()
    }

    /// Largest time on the grid.
    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::InvalidArgument("times and values differ in length".into()));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("time grid is not strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("path has non-finite values".into()));
        }
        Ok(())
    }

    /// Writes `t,value` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["t", "value"]).map_err(io)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([format!("{t}"), format!("{v:e}")]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Evaluates summands `F(X(n), ..., X(ln)) - Fbar` and `F_i(X(n), ..., X(in))`,
/// through symbol tables when the trajectory carries alphabet indices.
struct Summands<'a> {
    d: &'a DecomposedFunction,
    traj: &'a Trajectory,
    symbols: Option<&'a [u32]>,
    s: usize,
}

impl<'a> Summands<'a> {
    fn new(d: &'a DecomposedFunction, traj: &'a Trajectory) -> Self {
        let symbols = match (d.finite_law(), traj.symbols()) {
            (Some(law), Some(sym)) if symbols_match(law, traj, sym) => Some(sym),
            _ => None,
        };
        let s = d.finite_law().map_or(0, |law| law.len());
        Self { d, traj, symbols, s }
    }

    #[inline]
    fn table_index(&self, sym: &[u32], n: usize, k: usize) -> usize {
        let mut idx = 0usize;
        for j in 1..=k {
            idx = idx * self.s + sym[j * n - 1] as usize;
        }
        idx
    }

    fn centered(&self, n: usize, buf: &mut Vec<f64>) -> Result<f64> {
        let l = self.d.arity();
        if let (Some(sym), Some(table)) = (self.symbols, self.d.centered_table()) {
            return Ok(table[self.table_index(sym, n, l)]);
        }
        gather(self.traj, n, l, buf);
        self.d.eval_centered(buf)
    }

    fn component(&self, i: usize, n: usize, buf: &mut Vec<f64>) -> Result<f64> {
        if let (Some(sym), Some(table)) = (self.symbols, self.d.component_table(i)) {
            return Ok(table[self.table_index(sym, n, i)]);
        }
        gather(self.traj, n, i, buf);
        self.d.eval_component(i, buf)
    }
}

/// Spot-checks that trajectory symbols index the decomposition's alphabet.
fn symbols_match(law: &crate::process::FiniteLaw, traj: &Trajectory, sym: &[u32]) -> bool {
    sym.iter()
        .take(64)
        .enumerate()
        .all(|(k, &x)| law.support.get(x as usize).is_some_and(|v| v.as_slice() == traj.value(k + 1)))
}

fn gather(traj: &Trajectory, n: usize, k: usize, buf: &mut Vec<f64>) {
    buf.clear();
    for j in 1..=k {
        buf.extend_from_slice(traj.value(j * n));
    }
}

fn need(traj: &Trajectory, needed: usize) -> Result<()> {
    if traj.len() < needed {
        return Err(Error::TrajectoryTooShort { needed, available: traj.len() });
    }
    Ok(())
}

/// `Xi(0..=n)` as plain values.
pub fn xi_values(d: &DecomposedFunction, traj: &Trajectory, n: usize) -> Result<Vec<f64>> {
    need(traj, d.arity() * n)?;
    let summands = Summands::new(d, traj);
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = CompensatedSum::new();
    let mut buf = Vec::new();
    for k in 1..=n {
        acc.add(summands.centered(k, &mut buf)?);
        out.push(acc.value());
    }
    Ok(out)
}

/// The path `Xi(t) = sum_{n<=t} (F(X(n), ..., X(ln)) - Fbar)` for `t = 0..=n`.
pub fn xi_path(d: &DecomposedFunction, traj: &Trajectory, n: usize) -> Result<PathSample> {
    Ok(PathSample::on_integers(PathKind::Xi, xi_values(d, traj, n)?))
}

/// As [`xi_path`] with `F` evaluated directly and an explicit centering
/// constant in place of `Fbar`.
pub fn xi_path_with_center(spec: &FunctionSpec, center: f64, traj: &Trajectory, n: usize) -> Result<PathSample> {
    let l = spec.arity;
    need(traj, l * n)?;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    let mut acc = CompensatedSum::new();
    let mut buf = Vec::new();
    for k in 1..=n {
        gather(traj, k, l, &mut buf);
        acc.add(spec.eval(&buf)? - center);
        values.push(acc.value());
    }
    Ok(PathSample::on_integers(PathKind::Xi, values))
}

/// `Psi_i(t) = sum_{n <= t/i} F_i(X(n), ..., X(in))` for `t = 0..=t_max`,
/// one row per `i = 1..=l`.
pub fn psi_values(d: &DecomposedFunction, traj: &Trajectory, t_max: usize) -> Result<Vec<Vec<f64>>> {
    need(traj, t_max)?;
    let summands = Summands::new(d, traj);
    let mut buf = Vec::new();
    (1..=d.arity())
        .map(|i| {
            let mut row = Vec::with_capacity(t_max + 1);
            let mut acc = CompensatedSum::new();
            for t in 0..=t_max {
                // a new term enters exactly when i divides t
                if t > 0 && t % i == 0 {
                    acc.add(summands.component(i, t / i, &mut buf)?);
                }
                row.push(acc.value());
            }
            Ok(row)
        })
        .collect()
}

/// The `l` component paths on `0..=t_max`.
pub fn psi_paths(d: &DecomposedFunction, traj: &Trajectory, t_max: usize) -> Result<Vec<PathSample>> {
    Ok(psi_values(d, traj, t_max)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| PathSample::on_integers(PathKind::Psi(i + 1), row))
        .collect())
}

/// The summands `F_i(X(n), ..., X(in))` for `n = 1..=count`.
pub(crate) fn component_terms(d: &DecomposedFunction, traj: &Trajectory, i: usize, count: usize) -> Result<Vec<f64>> {
    need(traj, i * count)?;
    let summands = Summands::new(d, traj);
    let mut buf = Vec::new();
    (1..=count).map(|n| summands.component(i, n, &mut buf)).collect()
}

/// `(Psi_1(t), ..., Psi_l(t))` without storing the paths.
pub fn psi_terminal(d: &DecomposedFunction, traj: &Trajectory, t: usize) -> Result<Vec<f64>> {
    need(traj, t)?;
    let summands = Summands::new(d, traj);
    let mut buf = Vec::new();
    (1..=d.arity())
        .map(|i| {
            let mut acc = CompensatedSum::new();
            for n in 1..=t / i {
                acc.add(summands.component(i, n, &mut buf)?);
            }
            Ok(acc.value())
        })
        .collect()
}

/// The piecewise-linear path
/// `Q_n(t) = n^{-1/2} (Xi(floor(nt)) (1 + floor(nt) - nt) + Xi(floor(nt) + 1) (nt - floor(nt)))`
/// on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QnPath {
    n: u64,
    /// `n^{-1/2} Xi(k)` for `k = 0..=n`.
    knots: Vec<f64>,
}

impl QnPath {
    /// Builds `Q_n` from `Xi(0..=n)` given as plain values.
    pub fn from_values(xi: &[f64], n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("Q_n needs n >= 1".into()));
        }
        if xi.len() < n as usize + 1 {
            return Err(Error::InsufficientPath(format!(
                "Q_{n} needs Xi(0..={n}), path has {} points",
                xi.len()
            )));
        }
        let scale = (n as f64).sqrt().recip();
        Ok(Self { n, knots: xi[..=n as usize].iter().map(|v| v * scale).collect() })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Knot values `Q_n(k/n)`, `k = 0..=n`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `Q_n(t)` for `t in [0, 1]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let nt = (t.clamp(0.0, 1.0)) * self.n as f64;
        let k = (nt.floor() as usize).min(self.n as usize);
        let frac = nt - k as f64;
        if k == self.n as usize || frac == 0.0 {
            return self.knots[k];
        }
        self.knots[k] * (1.0 - frac) + self.knots[k + 1] * frac
    }

    /// Lebesgue measure of `{t in [0, 1]: Q_n(t) > 0}`, exact for the
    /// piecewise-linear path.
    pub fn occupation(&self) -> f64 {
        positive_time(&self.knots) / self.n as f64
    }

    /// Samples the path on `grid` (points in `[0, 1]`).
    pub fn to_path(&self, grid: &[f64]) -> PathSample {
        PathSample {
            kind: PathKind::Qn(self.n),
            times: grid.to_vec(),
            values: grid.iter().map(|&t| self.value_at(t)).collect(),
            provenance: None,
        }
    }
}

/// Time spent above zero by the linear interpolation of `knots` placed at
/// unit spacing.
pub(crate) fn positive_time(knots: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let piece = if a > 0.0 && b > 0.0 {
            1.0
        } else if a <= 0.0 && b <= 0.0 {
            0.0
        } else if a > 0.0 {
            a / (a - b)
        } else {
            b / (b - a)
        };
        acc.add(piece);
    }
    acc.value()
}

/// `Q_n` from a path on integer times.
pub fn interpolate_qn(xi: &PathSample, n: u64) -> Result<QnPath> {
    QnPath::from_values(&xi.values, n)
}

/// `f_n(1) = Xi(n) / sqrt(2 n R11 ln ln n)`.
pub fn lil_value(xi_n: f64, n: u64, r11: f64) -> Result<f64> {
    if !(r11 > 0.0) {
        return Err(Error::DegenerateVariance(r11));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("f_n needs n >= 3, got {n}")));
    }
    let nf = n as f64;
    Ok(xi_n / (2.0 * nf * r11 * nf.ln().ln()).sqrt())
}

/// `f_n(1)` read from a path on integer times.
pub fn lil_path(xi: &PathSample, r11: f64, n: u64) -> Result<f64> {
    let v = xi
        .at(n as usize)
        .ok_or_else(|| Error::InsufficientPath(format!("path ends before n = {n}")))?;
    lil_value(v, n, r11)
}

/// `f_n(1)` for every `n = 3..=xi.len()-1`, as a path of kind `Lil`.
pub fn lil_series(xi: &[f64], r11: f64) -> Result<PathSample> {
    if xi.len() < 4 {
        return Err(Error::InsufficientPath("need Xi up to n = 3".into()));
    }
    let mut times = Vec::with_capacity(xi.len() - 3);
    let mut values = Vec::with_capacity(xi.len() - 3);
    for (n, &v) in xi.iter().enumerate().skip(3) {
        times.push(n as f64);
        values.push(lil_value(v, n as u64, r11)?);
    }
    Ok(PathSample { kind: PathKind::Lil, times, values, provenance: None })
}

/// `max_{3 <= n <= xi.len()-1} |f_n(1)|`.
pub fn lil_sup(xi: &[f64], r11: f64) -> Result<f64> {
    Ok(lil_series(xi, r11)?.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `L_n = n^{-1} #{1 <= k <= n: Xi(k) > 0}` on a path starting at `Xi(0)`.
pub fn occupation_fraction(xi: &PathSample, n: usize) -> Result<f64> {
    occupation_fraction_values(&xi.values, n)
}

pub fn occupation_fraction_values(xi: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("L_n needs n >= 1".into()));
    }
    if xi.len() < n + 1 {
        return Err(Error::InsufficientPath(format!("path ends before n = {n}")));
    }
    let positive = xi[1..=n].iter().filter(|v| **v > 0.0).count();
    Ok(positive as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::decompose;
    use crate::process::ProcessModel;
    use approx::assert_relative_eq;

    fn product_case(p: f64) -> (ProcessModel, DecomposedFunction) {
        let m = ProcessModel::bernoulli(p).unwrap();
        let d = decompose(&FunctionSpec::product(2), m.marginal()).unwrap();
        (m, d)
    }

    #[test]
    fn empty_path_is_origin() {
        let (m, d) = product_case(0.5);
        let traj = m.sample_trajectory(4, 1).unwrap();
        let path = xi_path(&d, &traj, 0).unwrap();
        assert_eq!(path.values, vec![0.0]);
    }

    #[test]
    fn hand_evaluated_sum() {
        let traj = Trajectory::from_values(vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0], None).unwrap();
        let path = xi_path_with_center(&FunctionSpec::product(2), 0.0, &traj, 3).unwrap();
        assert_eq!(path.at(3), Some(1.0));
    }

    #[test]
    fn degenerate_law_gives_zero_sum() {
        let (m, d) = product_case(1.0);
        let traj = m.sample_trajectory(200, 3).unwrap();
        assert!(xi_values(&d, &traj, 100).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let (m, d) = product_case(0.5);
        let traj = m.sample_trajectory(10, 1).unwrap();
        assert!(matches!(xi_values(&d, &traj, 6), Err(Error::TrajectoryTooShort { needed: 12, available: 10 })));
    }

    #[test]
    fn splitting_identity() {
        let (m, d) = product_case(0.3);
        let traj = m.sample_trajectory(2000, 9).unwrap();
        let xi = xi_values(&d, &traj, 1000).unwrap();
        let psi = psi_values(&d, &traj, 2000).unwrap();
        for t in 0..=1000 {
            let split = psi[0][t] + psi[1][2 * t];
            assert!((xi[t] - split).abs() < 1e-10, "t={t}");
        }
        let term = psi_terminal(&d, &traj, 2000).unwrap();
        assert_eq!(term, vec![psi[0][2000], psi[1][2000]]);
    }

    #[test]
    fn table_and_direct_evaluation_agree() {
        let (m, d) = product_case(0.3);
        let traj = m.sample_trajectory(400, 2).unwrap();
        let stripped = Trajectory::from_values((1..=400).map(|n| traj.scalar(n)).collect(), None).unwrap();
        assert_eq!(xi_values(&d, &traj, 200).unwrap(), xi_values(&d, &stripped, 200).unwrap());
    }

    #[test]
    fn qn_interpolation() {
        let q = QnPath::from_values(&[0.0, 1.0, -1.0, 2.0], 2).unwrap();
        assert_relative_eq!(q.value_at(0.75), 0.0, epsilon = 1e-15);
        assert_relative_eq!(q.value_at(0.5), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(q.value_at(1.0), -1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(QnPath::from_values(&[0.0, 1.0], 2), Err(Error::InsufficientPath(_))));
    }

    #[test]
    fn qn_occupation_is_exact_for_lines() {
        let q = QnPath::from_values(&[0.0, 1.0, -1.0], 2).unwrap();
        // positive on all of the first piece and half of the second
        assert_relative_eq!(q.occupation(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn lil_examples() {
        assert_eq!(lil_value(0.0, 10, 1.0).unwrap(), 0.0);
        let expected = 1.0 / (6.0 * 3f64.ln().ln()).sqrt();
        assert_relative_eq!(lil_value(1.0, 3, 1.0).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 1.33122, epsilon = 1e-5);
        assert!(matches!(lil_value(1.0, 3, 0.0), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn occupation_examples() {
        let up = PathSample::on_integers(PathKind::Xi, (0..=5).map(|k| k as f64).collect());
        assert_eq!(occupation_fraction(&up, 5).unwrap(), 1.0);
        let flat = PathSample::on_integers(PathKind::Xi, vec![0.0; 6]);
        assert_eq!(occupation_fraction(&flat, 5).unwrap(), 0.0);
        let mixed = PathSample::on_integers(PathKind::Xi, vec![0.0, 1.0, -1.0, 0.0, 2.0]);
        assert_eq!(occupation_fraction(&mixed, 4).unwrap(), 0.5);
    }

    #[test]
    fn csv_output() {
        let path = PathSample::on_integers(PathKind::Xi, vec![0.0, 0.5]);
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,value\n0,0e0\n1,5e-1\n");
    }
}
