//! Acceptance criteria 1 to 10. Each test prints one `criterion N: PASS|FAIL`
//! line and fails when the criterion is not met.
//!
//! Reference values are computed here, independently of the library: the
//! Bernoulli closed forms by direct enumeration and the kernel `R` from its
//! defining sum.

use std::time::Instant;

use nonconv_cli::{run, ExperimentConfig};
use nonconv_core::asclt::{asclt_arcsine_suite, asclt_scalar_suite, gaussian_scalar_lane, CLASSICAL_ARCSINE_THRESHOLD};
use nonconv_core::blocks::{block_sums, dyadic_grid, negligibility_diagnostic, schedule_covering};
use nonconv_core::covariance::{empirical_d, limiting_d, CovarianceModel};
use nonconv_core::gaussian::{arcsine_reference, factor, sample_q_with};
use nonconv_core::mixing::{
    alpha_coeff, check_assumption, mixing_profile, phi_coeff, psi_coeff, required_moments, rho_coeff,
    AssumptionParams, ClauseStatus,
};
use nonconv_core::replica::{map_replicas, replica_rng};
use nonconv_core::stats::{mean, ArcsineCdf};
use nonconv_core::sums::{lil_sup, psi_values, xi_values};
use nonconv_core::{decompose, FunctionSpec, ModelSpec, ProcessModel};
use rand::Rng;

const SEED: u64 = 42;

fn verdict(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {}  {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn bernoulli_product() -> (ProcessModel, nonconv_core::DecomposedFunction) {
    let model = ProcessModel::bernoulli(0.5).unwrap();
    let d = decompose(&FunctionSpec::product(2), model.marginal()).unwrap();
    (model, d)
}

/// `D` for `F = x1 x2` over i.i.d. Bernoulli(1/2), by enumeration. Only the
/// `u = 0` terms survive independence:
/// `D_11 = E F_1(X)^2`, `D_22 = (2/4) E F_2(X, Y)^2`,
/// `D_12 = (1/2) E F_1(Y) F_2(X, Y)`.
fn bernoulli_closed_form() -> [[f64; 2]; 2] {
    let xs = [0.0, 1.0];
    let f = |x: f64, y: f64| x * y;
    let fbar: f64 = xs.iter().flat_map(|x| xs.iter().map(move |y| f(*x, *y))).sum::<f64>() / 4.0;
    let g1 = |x: f64| (f(x, 0.0) + f(x, 1.0)) / 2.0;
    let f1 = |x: f64| g1(x) - fbar;
    let f2 = |x: f64, y: f64| f(x, y) - g1(x);
    let e1 = |h: &dyn Fn(f64) -> f64| xs.iter().map(|x| h(*x)).sum::<f64>() / 2.0;
    let e2 = |h: &dyn Fn(f64, f64) -> f64| xs.iter().flat_map(|x| xs.iter().map(move |y| (*x, *y))).map(|(x, y)| h(x, y)).sum::<f64>() / 4.0;
    let d11 = e1(&|x| f1(x) * f1(x));
    let d22 = 0.5 * e2(&|x, y| f2(x, y) * f2(x, y));
    let d12 = 0.5 * e2(&|x, y| f1(y) * f2(x, y));
    [[d11, d12], [d12, d22]]
}

/// `R(s, t) = sum_ij D_ij min(i s, j t)`.
fn kernel(d: &[[f64; 2]; 2], s: f64, t: f64) -> f64 {
    let mut r = 0.0;
    for i in 1..=2 {
        for j in 1..=2 {
            r += d[i - 1][j - 1] * (i as f64 * s).min(j as f64 * t);
        }
    }
    r
}

fn digits(mut idx: usize, s: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for slot in out.iter_mut().rev() {
        *slot = (idx % s) as f64;
        idx /= s;
    }
    out
}

#[test]
fn criterion_01_exact_identities() {
    let start = Instant::now();
    let mut rng = replica_rng(SEED, 1);
    let mut worst = 0.0f64;
    let mut bitwise_ok = true;
    let mut checked = 0;
    for case in 0..50 {
        let arity = 1 + case % 3;
        // every fifth case: integer table over a fair coin, where all sums are dyadic
        let integer = case % 5 == 4;
        let s = if integer { 2 } else { rng.random_range(2..=3) };
        let alphabet: Vec<Vec<f64>> = (0..s).map(|k| vec![k as f64]).collect();
        let model = if integer {
            ProcessModel::from_spec(ModelSpec::Iid { probs: vec![0.5, 0.5], observable: None }).unwrap()
        } else if case % 2 == 0 {
            let w: Vec<f64> = (0..s).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            ProcessModel::from_spec(ModelSpec::Iid { probs: w.iter().map(|x| x / total).collect(), observable: None }).unwrap()
        } else {
            let transition = (0..s)
                .map(|_| {
                    let w: Vec<f64> = (0..s).map(|_| rng.random_range(0.1..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
                    let head: f64 = row[..s - 1].iter().sum();
                    row[s - 1] = 1.0 - head;
                    row
                })
                .collect();
            ProcessModel::from_spec(ModelSpec::FiniteMarkov { transition, observable: None }).unwrap()
        };
        let size = s.pow(arity as u32);
        let values: Vec<f64> = (0..size)
            .map(|_| if integer { rng.random_range(-5i32..=5) as f64 } else { rng.random_range(-5.0..5.0) })
            .collect();
        let spec = FunctionSpec::dense_table(arity, alphabet, values).unwrap();
        let d = decompose(&spec, model.marginal()).unwrap();
        let probs = model.marginal().as_finite().unwrap().probs.clone();

        // telescoping and anchored centering
        for idx in 0..size {
            let x = digits(idx, s, arity);
            let sum: f64 = (1..=arity).map(|i| d.eval_component(i, &x[..i]).unwrap()).sum();
            worst = worst.max((sum - (spec.eval(&x).unwrap() - d.f_bar())).abs());
        }
        for i in 1..=arity {
            for row in d.component_table(i).unwrap().chunks(s) {
                worst = worst.max(row.iter().zip(&probs).map(|(v, p)| v * p).sum::<f64>().abs());
            }
        }

        // splitting
        let n = 300;
        let traj = model.sample_trajectory(arity * n, SEED + case as u64).unwrap();
        let xi = xi_values(&d, &traj, n).unwrap();
        let psi = psi_values(&d, &traj, arity * n).unwrap();
        for t in 0..=n {
            let split: f64 = (1..=arity).map(|i| psi[i - 1][i * t]).sum();
            if integer {
                bitwise_ok &= xi[t] == split;
            }
            worst = worst.max((xi[t] - split).abs());
        }

        // blocks tile (0, a(nu + 1)]
        let schedule = schedule_covering(0.04, 0.10, 0.24, (arity * n) as u64, None).unwrap();
        let nu = schedule.nu((arity * n) as u64).unwrap();
        for i in 1..=arity {
            let (v, w) = block_sums(&d, &traj, &schedule, i, nu).unwrap();
            let total: f64 = v.iter().chain(&w).sum();
            let target = psi[i - 1][schedule.next_start(nu) as usize];
            if integer {
                bitwise_ok &= total == target;
            }
            worst = worst.max((total - target).abs());
        }
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-10 && bitwise_ok && elapsed < 10.0;
    verdict(1, ok, format!("{checked} instances, max deviation {worst:e}, integer cases bitwise {bitwise_ok}, {elapsed:.2}s"));
}

#[test]
fn criterion_02_covariance_closed_form() {
    let start = Instant::now();
    let (model, d) = bernoulli_product();
    let exact = bernoulli_closed_form();
    let series = limiting_d(&d, &model, 10, 1e-10).unwrap();
    let mut dev = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            dev = dev.max((series.matrix[i][j] - exact[i][j]).abs());
        }
    }
    let r11 = series.r11();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = dev <= 1e-12
        && (exact[0][0] - 0.0625).abs() <= 1e-15
        && (exact[0][1] - 0.03125).abs() <= 1e-15
        && (r11 - 0.25).abs() <= 1e-12
        && (kernel(&exact, 1.0, 1.0) - 0.25).abs() <= 1e-15
        && elapsed < 1.0;
    verdict(2, ok, format!("D={:?}, max deviation {dev:e}, R(1,1)={r11}, {elapsed:.3}s", series.matrix));
}

#[test]
fn criterion_03_series_matches_monte_carlo() {
    let start = Instant::now();
    let (model, d) = bernoulli_product();
    let exact = bernoulli_closed_form();
    let emp = empirical_d(&model, &d, 100_000, 200, SEED).unwrap();
    let se = emp.std_errors.clone().unwrap();
    let mut z_max = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            z_max = z_max.max((emp.matrix[i][j] - exact[i][j]).abs() / se[i][j]);
        }
    }

    let n = 100_000;
    let squares = map_replicas(200, SEED + 1, |_, rng| {
        let traj = model.sample_with(2 * n, rng).unwrap();
        let x = xi_values(&d, &traj, n).unwrap()[n];
        x * x / n as f64
    });
    let var = mean(&squares);
    let var_se = nonconv_core::stats::standard_error(&squares);
    let var_z = (var - 0.25).abs() / var_se;

    let chain = ProcessModel::two_state(0.3, 0.3).unwrap();
    let dc = decompose(&FunctionSpec::product(2), chain.marginal()).unwrap();
    let series = limiting_d(&dc, &chain, 200, 1e-10).unwrap();
    let emp_chain = empirical_d(&chain, &dc, 100_000, 200, SEED + 2).unwrap();
    let se_chain = emp_chain.std_errors.clone().unwrap();
    let mut chain_ok = true;
    for i in 0..2 {
        for j in 0..2 {
            let tol = (3.0 * se_chain[i][j]).max(0.05 * series.matrix[i][j].abs());
            chain_ok &= (series.matrix[i][j] - emp_chain.matrix[i][j]).abs() <= tol;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = z_max <= 3.0 && var_z <= 3.0 && chain_ok && elapsed < 300.0;
    verdict(
        3,
        ok,
        format!(
            "Bernoulli max |z|={z_max:.2}, Var(Xi(N)/sqrt N)={var:.4} (|z|={var_z:.2}), two-state series {:?} vs empirical {:?}, {elapsed:.1}s",
            series.matrix, emp_chain.matrix
        ),
    );
}

#[test]
fn criterion_04_asclt_scalar() {
    let start = Instant::now();
    let (model, d) = bernoulli_product();
    let cov = CovarianceModel::from_matrix(bernoulli_closed_form().iter().map(|r| r.to_vec()).collect());
    let scalar = asclt_scalar_suite(&model, &d, &cov, 1_000_000, SEED).unwrap();
    let gauss = gaussian_scalar_lane(&cov, 1_000_000, SEED).unwrap();
    let ks = scalar.checkpoints.last().unwrap().ks;
    let ks_g = gauss.checkpoints.last().unwrap().ks;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = ks < 0.1 && ks_g < 0.08 && elapsed < 600.0;
    verdict(4, ok, format!("KS scalar {ks:.4} (< 0.1), Gaussian lane {ks_g:.4} (< 0.08) at n=1e6, {elapsed:.1}s"));
}

#[test]
fn criterion_05_arcsine() {
    let start = Instant::now();
    let model = ProcessModel::bernoulli(0.5).unwrap();
    let d = decompose(&FunctionSpec::first_coordinate(1), model.marginal()).unwrap();
    let lane = asclt_arcsine_suite(&model, &d, &ArcsineCdf, 1_000_000, SEED, CLASSICAL_ARCSINE_THRESHOLD).unwrap();
    let ks = lane.checkpoints.last().unwrap().ks;
    let bm = CovarianceModel::from_matrix(vec![vec![1.0]]);
    let reference = arcsine_reference(&bm, 1e-3, 10_000, SEED).unwrap();
    let ks_ref = reference.cdf.ks_distance(&ArcsineCdf);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = ks < 0.1 && ks_ref < 0.05 && elapsed < 600.0;
    verdict(5, ok, format!("classical lane KS {ks:.4} (< 0.1), Brownian reference KS {ks_ref:.4} (< 0.05), {elapsed:.1}s"));
}

#[test]
fn criterion_06_lil_boundedness() {
    let start = Instant::now();
    let (model, d) = bernoulli_product();
    let n = 1_000_000;
    let sups: Vec<f64> = (1..=20u64)
        .map(|seed| {
            let traj = model.sample_trajectory(2 * n, seed).unwrap();
            lil_sup(&xi_values(&d, &traj, n).unwrap(), 0.25).unwrap()
        })
        .collect();
    let inside = sups.iter().filter(|v| (0.5..=1.3).contains(*v)).count();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = inside >= 18 && elapsed < 900.0;
    let shown: Vec<String> = sups.iter().map(|v| format!("{v:.3}")).collect();
    verdict(6, ok, format!("{inside}/20 seeds inside [0.5, 1.3]; sups [{}], {elapsed:.1}s", shown.join(", ")));
}

#[test]
fn criterion_07_mixing_exactness() {
    let start = Instant::now();
    let p = vec![vec![0.7, 0.3], vec![0.3, 0.7]];
    let pi = vec![0.5, 0.5];
    let mut dev = 0.0f64;
    for n in 1..=30 {
        let l = 0.4f64.powi(n);
        dev = dev.max((psi_coeff(&p, &pi, n as usize).unwrap() - l).abs());
        dev = dev.max((rho_coeff(&p, &pi, n as usize).unwrap() - l).abs());
    }
    let q = vec![vec![0.2, 0.5, 0.3]; 3];
    let qpi = vec![0.2, 0.5, 0.3];
    let independent_zero = (1..=5).all(|n| {
        psi_coeff(&q, &qpi, n).unwrap() == 0.0
            && phi_coeff(&q, &qpi, n).unwrap() == 0.0
            && rho_coeff(&q, &qpi, n).unwrap() == 0.0
            && alpha_coeff(&q, &qpi, n).unwrap() == 0.0
    });
    let model = ProcessModel::two_state(0.3, 0.3).unwrap();
    let f = FunctionSpec::product(2);
    let params = AssumptionParams { p: 1e6, q: 1e6, delta: 0.5, m: 1e6, iota: f.holder.iota, kappa: f.holder.kappa, d: 1.0 };
    let profile = mixing_profile(&model, 50, &required_moments(&params)).unwrap();
    let assumption = check_assumption(&profile, &params).status;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = dev <= 1e-12 && independent_zero && assumption == ClauseStatus::Pass && elapsed < 1.0;
    verdict(7, ok, format!("max deviation {dev:e}, independent chain zero {independent_zero}, assumption {assumption:?}, {elapsed:.3}s"));
}

#[test]
fn criterion_08_gaussian_simulator() {
    let start = Instant::now();
    let exact = bernoulli_closed_form();
    let cov = CovarianceModel::from_matrix(exact.iter().map(|r| r.to_vec()).collect());
    let root = factor(&cov).unwrap();
    let target = kernel(&exact, 0.5, 1.0);
    let replicas = 100_000;
    let pairs = map_replicas(replicas, SEED, |_, rng| {
        let q = sample_q_with(&root, &[0.0, 0.5, 1.0, 2.0], rng).unwrap().q.unwrap();
        (q[1], q[2], q[3])
    });
    // Q is centered, so E Q(s) Q(t) is estimated by the mean of the products
    let products: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
    let est = mean(&products);
    let se = nonconv_core::stats::standard_error(&products);
    let doubled: Vec<f64> = pairs.iter().map(|p| p.1 * p.2).collect();
    let est2 = mean(&doubled);
    let se2 = nonconv_core::stats::standard_error(&doubled);

    let mut scaling_exact = true;
    for (s, t) in [(0.5, 1.0), (0.3, 0.7), (1.0, 1.0), (2.5, 0.125)] {
        scaling_exact &= cov.kernel_r(2.0 * s, 2.0 * t) == 2.0 * cov.kernel_r(s, t);
    }
    let scaling_stat = (est2 - 2.0 * est).abs() <= 3.0 * (se2 * se2 + 4.0 * se * se).sqrt()
        && (est2 - kernel(&exact, 1.0, 2.0)).abs() <= 3.0 * se2;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = (est - target).abs() <= 3.0 * se
        && (cov.kernel_r(0.5, 1.0) - target).abs() <= 1e-15
        && scaling_exact
        && scaling_stat
        && elapsed < 120.0;
    verdict(
        8,
        ok,
        format!("E Q(.5)Q(1) = {est:.5} +/- {se:.5} vs R = {target}, E Q(1)Q(2) = {est2:.5}, kernel scaling exact {scaling_exact}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_09_block_negligibility() {
    let start = Instant::now();
    let (model, d) = bernoulli_product();
    let grid = dyadic_grid(10, 20);
    let schedule = schedule_covering(0.04, 0.10, 0.24, 1 << 20, None).unwrap();
    let report = negligibility_diagnostic(&d, &model, &schedule, &grid, 400, SEED).unwrap();
    let ok_all = report.components.iter().all(|c| c.decays(3.0));
    let elapsed = start.elapsed().as_secs_f64();
    let slopes: Vec<String> = report
        .components
        .iter()
        .map(|c| format!("i={}: {:.4} +/- {:.4}", c.i, c.slope.unwrap_or(f64::NAN), c.slope_se.unwrap_or(f64::NAN)))
        .collect();
    verdict(9, ok_all && elapsed < 300.0, format!("slopes {}, {elapsed:.1}s", slopes.join("; ")));
}

fn small_config(seed: u64) -> ExperimentConfig {
    let text = format!(
        r#"{{
        "seed": {seed},
        "model": {{"kind": "two_state", "a": 0.3, "b": 0.3}},
        "function": {{"arity": 2, "rule": {{"type": "product"}}}},
        "suites": ["variance", "covariance", "asclt", "arcsine", "lil", "blocks", "mixing"],
        "horizon": {{"n": 2000, "n_max": 5000, "replicas": 60, "truncation": 60, "t": 2000}},
        "arcsine": {{"reference_replicas": 1000, "grid_step": 0.01}},
        "lil": {{"runs": 6, "min_inside": 1}},
        "blocks": {{"grid_lo": 6, "grid_hi": 12, "replicas": 60}}
    }}"#
    );
    ExperimentConfig::from_json(&text, None).unwrap()
}

#[test]
fn criterion_10_determinism() {
    let cfg = small_config(SEED);
    let a = run(&cfg, 1).unwrap();
    let b = run(&cfg, 1).unwrap();
    let c = run(&cfg, 4).unwrap();
    let names: Vec<&String> = a.files.keys().collect();
    let same_rerun = a.files == b.files;
    let same_threads = a.files == c.files;
    let other = run(&small_config(SEED + 1), 1).unwrap();
    let seed_matters = other.files.get("variance.json") != a.files.get("variance.json");
    let ok = same_rerun && same_threads && seed_matters && names.len() >= 12;
    verdict(10, ok, format!("{} files, rerun identical {same_rerun}, 4 threads identical {same_threads}", names.len()));
}
