//! Gaussian limit objects: the process `G` with independent stationary
//! increments of covariance `D`, and `Q(t) = sum_j G_j(jt)` with covariance
//! `R(s, t)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::covariance::{CovarianceModel, PSD_TOL};
use crate::error::{Error, Result};
use crate::replica::{map_replicas, replica_rng};
use crate::stats::{NormalCdf, WeightedCdf};
use crate::sums::positive_time;

/// Default grid step for functionals of simulated paths.
pub const DEFAULT_GRID_STEP: f64 = 1e-3;
pub const MIN_ARCSINE_REPLICAS: usize = 1_000;
const RECONSTRUCTION_TOL: f64 = 1e-10;

/// `L` with `L L^T = D`: columns `sqrt(lambda_k) v_k` over the positive
/// eigenvalues, in descending order, each with its first nonzero entry
/// positive.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceRoot {
    l: DMatrix<f64>,
}

impl CovarianceRoot {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn rank(&self) -> usize {
        self.l.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `L z` for a standard normal `z` of length `rank`, scaled by `scale`.
    fn draw_increment<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for c in 0..self.rank() {
            let z: f64 = rng.sample(StandardNormal);
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.l[(r, c)] * z * scale;
            }
        }
    }
}

/// Factorizes `D` through its eigendecomposition.
pub fn factor(c: &CovarianceModel) -> Result<CovarianceRoot> {
    factor_matrix(&c.to_dmatrix())
}

pub fn factor_matrix(d: &DMatrix<f64>) -> Result<CovarianceRoot> {
    let l = d.nrows();
    let sym = 0.5 * (d + d.transpose());
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = order.first().map_or(0.0, |&k| eig.eigenvalues[k].max(0.0));
    let mut columns = Vec::new();
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if lambda < PSD_TOL {
            return Err(Error::NotPositiveSemidefinite(lambda));
        }
        if lambda <= top * 1e-14 || lambda <= 0.0 {
            continue;
        }
        let mut v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        columns.push(v * lambda.sqrt());
    }
    let root = if columns.is_empty() { DMatrix::zeros(l, 0) } else { DMatrix::from_columns(&columns) };
    let err = (&root * root.transpose() - &sym).amax();
    if err > RECONSTRUCTION_TOL * (1.0 + sym.amax()) {
        return Err(Error::InvalidArgument(format!("factorization error {err:e} exceeds tolerance")));
    }
    Ok(CovarianceRoot { l: root })
}

/// Values of `G` (and optionally `Q`) on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianPath {
    pub grid: Vec<f64>,
    /// `g[k][j]` is `G_{j+1}(grid[k])`.
    pub g: Vec<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub seed: u64,
    pub stream: u64,
}

impl GaussianPath {
    /// Writes `t, G1..Gl[, Q]` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        let l = self.g.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=l).map(|j| format!("G{j}")));
        if self.q.is_some() {
            header.push("Q".into());
        }
        w.write_record(&header).map_err(io)?;
        for (k, t) in self.grid.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(self.g[k].iter().map(|v| format!("{v:e}")));
            if let Some(q) = &self.q {
                row.push(format!("{:e}", q[k]));
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::BadGrid("grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::BadGrid("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Simulates `G` on `grid` with the generator `rng`.
pub fn sample_g_with<R: Rng + ?Sized>(root: &CovarianceRoot, grid: &[f64], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    check_grid(grid)?;
    let l = root.dim();
    let mut out = Vec::with_capacity(grid.len());
    out.push(vec![0.0; l]);
    let mut inc = vec![0.0; l];
    for w in grid.windows(2) {
        root.draw_increment(rng, (w[1] - w[0]).sqrt(), &mut inc);
        let next: Vec<f64> = out.last().expect("nonempty").iter().zip(&inc).map(|(a, b)| a + b).collect();
        out.push(next);
    }
    Ok(out)
}

/// Simulates `G` on `grid` from stream 0 of `seed`.
pub fn sample_g(root: &CovarianceRoot, grid: &[f64], seed: u64) -> Result<GaussianPath> {
    let mut rng = replica_rng(seed, 0);
    let g = sample_g_with(root, grid, &mut rng)?;
    Ok(GaussianPath { grid: grid.to_vec(), g, q: None, seed, stream: 0 })
}

/// Simulates `G` on the merged grid `{j t_k}` and reads off
/// `Q(t_k) = sum_j G_j(j t_k)`.
pub fn sample_q_with<R: Rng + ?Sized>(root: &CovarianceRoot, grid: &[f64], rng: &mut R) -> Result<GaussianPath> {
    check_grid(grid)?;
    let l = root.dim();
    let mut merged: Vec<f64> = grid.iter().flat_map(|&t| (1..=l).map(move |j| j as f64 * t)).collect();
    merged.push(0.0);
    merged.sort_by(f64::total_cmp);
    merged.dedup();
    let g = sample_g_with(root, &merged, rng)?;
    let at = |x: f64| merged.binary_search_by(|p| p.total_cmp(&x)).expect("grid point present");
    let q = grid.iter().map(|&t| (1..=l).map(|j| g[at(j as f64 * t)][j - 1]).sum()).collect();
    let g_on_grid = grid.iter().map(|&t| g[at(t)].clone()).collect();
    Ok(GaussianPath { grid: grid.to_vec(), g: g_on_grid, q: Some(q), seed: 0, stream: 0 })
}

pub fn sample_q(root: &CovarianceRoot, grid: &[f64], seed: u64) -> Result<GaussianPath> {
    let mut rng = replica_rng(seed, 0);
    let mut path = sample_q_with(root, grid, &mut rng)?;
    path.seed = seed;
    Ok(path)
}

/// `Q(k h)` for `k = 0..=m`, simulating `G` on the uniform grid of step `h`
/// up to `l m h`.
pub fn sample_q_uniform<R: Rng + ?Sized>(root: &CovarianceRoot, h: f64, m: usize, rng: &mut R) -> Vec<f64> {
    let l = root.dim();
    let steps = l * m;
    let scale = h.sqrt();
    // g[j] holds G_{j+1} at every grid index
    let mut g = vec![Vec::with_capacity(steps + 1); l];
    for path in g.iter_mut() {
        path.push(0.0);
    }
    let mut inc = vec![0.0; l];
    for _ in 0..steps {
        root.draw_increment(rng, scale, &mut inc);
        for (path, d) in g.iter_mut().zip(&inc) {
            let last = *path.last().expect("nonempty");
            path.push(last + d);
        }
    }
    (0..=m).map(|k| (1..=l).map(|j| g[j - 1][j * k]).sum()).collect()
}

/// `N(0, R(1, 1))`, the law of `Q(1)`.
pub fn q1_reference_cdf(c: &CovarianceModel) -> Result<NormalCdf> {
    NormalCdf::new(c.r11())
}

/// Sampled law of the occupation time `|{u in [0, 1]: Q(u) > 0}|`.
#[derive(Clone, Debug)]
pub struct ArcsineReference {
    pub samples: Vec<f64>,
    pub cdf: WeightedCdf,
    pub grid_step: f64,
}

/// Simulates `replicas` paths of `Q` on a grid of step `grid_step` over
/// `[0, 1]` and records the exact positive time of each interpolated path.
pub fn arcsine_reference(c: &CovarianceModel, grid_step: f64, replicas: usize, seed: u64) -> Result<ArcsineReference> {
    if !(c.r11() > 0.0) {
        return Err(Error::DegenerateVariance(c.r11()));
    }
    arcsine_reference_from_root(&factor(c)?, grid_step, replicas, seed)
}

pub fn arcsine_reference_from_root(
    root: &CovarianceRoot,
    grid_step: f64,
    replicas: usize,
    seed: u64,
) -> Result<ArcsineReference> {
    if replicas < MIN_ARCSINE_REPLICAS {
        return Err(Error::TooFewSamples { needed: MIN_ARCSINE_REPLICAS, got: replicas });
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::BadGrid(format!("grid step {grid_step} outside (0, 1]")));
    }
    let m = (1.0 / grid_step).round() as usize;
    let h = 1.0 / m as f64;
    let samples = map_replicas(replicas, seed, |_, rng: &mut ChaCha8Rng| {
        let q = sample_q_uniform(root, h, m, rng);
        positive_time(&q) / m as f64
    });
    let cdf = WeightedCdf::from_samples(&samples)?;
    Ok(ArcsineReference { samples, cdf, grid_step: h })
}
