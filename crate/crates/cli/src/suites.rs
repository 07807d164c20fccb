//! The seven experiment suites.

use nonconv_core::asclt::{
    asclt_arcsine_suite, asclt_scalar_suite, gaussian_scalar_lane, Status, ARCSINE_THRESHOLD,
    CLASSICAL_ARCSINE_THRESHOLD, GAUSSIAN_LANE_THRESHOLD, SCALAR_THRESHOLD, TARGET_HORIZON,
};
use nonconv_core::blocks::{dyadic_grid, negligibility_diagnostic, schedule_covering};
use nonconv_core::covariance::{empirical_d, limiting_d, CovarianceModel};
use nonconv_core::gaussian::{arcsine_reference, factor, sample_q_uniform};
use nonconv_core::mixing::{check_assumption, mixing_profile, required_moments, search_parameters, ClauseStatus};
use nonconv_core::replica::{derive_seed, map_replicas};
use nonconv_core::stats::{mean, standard_error, ArcsineCdf};
use nonconv_core::sums::{lil_sup, xi_values};
use nonconv_core::{decompose, DecomposedFunction, ProcessModel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Suite};
use crate::CliError;

/// A named constant that shaped a verdict, tagged `fixed` (built-in) or
/// `configured`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constant {
    pub name: &'static str,
    pub value: f64,
    pub origin: &'static str,
}

fn fixed(name: &'static str, value: f64) -> Constant {
    Constant { name, value, origin: "fixed" }
}

fn configured(name: &'static str, value: f64) -> Constant {
    Constant { name, value, origin: "configured" }
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub status: Status,
    pub warnings: Vec<String>,
    pub constants: Vec<Constant>,
    pub result: Value,
    /// Extra files, `(name, contents)`.
    pub files: Vec<(String, Vec<u8>)>,
}

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub model: ProcessModel,
    pub d: DecomposedFunction,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self, CliError> {
        let config = |e: nonconv_core::Error| CliError::Config(e.to_string());
        let model = ProcessModel::from_spec(cfg.model.clone()).map_err(config)?;
        let d = decompose(&cfg.function, model.marginal()).map_err(config)?;
        Ok(Self { cfg, model, d })
    }

    fn seed(&self, suite: Suite) -> u64 {
        derive_seed(self.cfg.seed, suite as u64 + 1)
    }

    fn series(&self) -> Result<CovarianceModel, CliError> {
        let h = &self.cfg.horizon;
        Ok(limiting_d(&self.d, &self.model, h.truncation, h.tail_tol)?)
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("result serializes");
    bytes.push(b'\n');
    bytes
}

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

pub fn run_suite(suite: Suite, ctx: &Context) -> Result<SuiteOutcome, CliError> {
    let mut out = match suite {
        Suite::Variance => variance(ctx)?,
        Suite::Covariance => covariance(ctx)?,
        Suite::Asclt => asclt(ctx)?,
        Suite::Arcsine => arcsine(ctx)?,
        Suite::Lil => lil(ctx)?,
        Suite::Blocks => blocks(ctx)?,
        Suite::Mixing => mixing(ctx)?,
    };
    out.suite = suite;
    Ok(out)
}

fn outcome(status: Status, result: Value) -> SuiteOutcome {
    SuiteOutcome { suite: Suite::Variance, status, warnings: Vec::new(), constants: Vec::new(), result, files: Vec::new() }
}

fn variance(ctx: &Context) -> Result<SuiteOutcome, CliError> {
    let h = &ctx.cfg.horizon;
    let cov = ctx.series()?;
    let l = ctx.d.arity();
    let n = h.n;
    let squares = map_replicas(h.replicas, ctx.seed(Suite::Variance), |_, rng| {
        let traj = ctx.model.sample_with(l * n, rng)?;
        let xi = xi_values(&ctx.d, &traj, n)?;
        Ok::<f64, nonconv_core::Error>(xi[n] * xi[n] / n as f64)
    })
    .into_iter()
    .collect::<Result<Vec<f64>, _>>()?;
    let estimate = mean(&squares);
    let se = standard_error(&squares);
    let r11 = cov.r11();
    let ok = (estimate - r11).abs() <= 3.0 * se;
    let mut o = outcome(
        verdict(ok),
        json!({"n": n, "replicas": h.replicas, "r11": r11, "estimate": estimate, "std_error": se, "f_bar": ctx.d.f_bar()}),
    );
    o.constants = vec![fixed("se_multiplier", 3.0), configured("n", n as f64), configured("replicas", h.replicas as f64)];
    o.files.push(("covariance.json".into(), json_bytes(&cov)));
    Ok(o)
}

fn covariance(ctx: &Context) -> Result<SuiteOutcome, CliError> {
    const RELATIVE_FLOOR: f64 = 0.05;
    let h = &ctx.cfg.horizon;
    let series = ctx.series()?;
    let emp = empirical_d(&ctx.model, &ctx.d, h.t, h.replicas, ctx.seed(Suite::Covariance))?;
    let se = emp.std_errors.clone().unwrap_or_default();
    let l = series.dim();
    let mut entries = Vec::new();
    let mut ok = true;
    for i in 0..l {
        for j in 0..l {
            let (s, e, err) = (series.matrix[i][j], emp.matrix[i][j], se[i][j]);
            let tol = (3.0 * err).max(RELATIVE_FLOOR * s.abs());
            let good = (s - e).abs() <= tol;
            ok &= good;
            entries.push(json!({"i": i + 1, "j": j + 1, "series": s, "empirical": e, "std_error": err, "ok": good}));
        }
    }
    let mut o = outcome(verdict(ok), json!({"t": h.t, "replicas": h.replicas, "entries": entries}));
    o.constants = vec![
        fixed("se_multiplier", 3.0),
        fixed("relative_floor", RELATIVE_FLOOR),
        configured("truncation", h.truncation as f64),
        configured("t", h.t as f64),
    ];
    o.files.push(("covariance.json".into(), json_bytes(&series)));
    o.files.push(("covariance_empirical.json".into(), json_bytes(&emp)));
    Ok(o)
}

fn short_horizon_warning(n_max: usize) -> Option<String> {
    ((n_max as u64) < TARGET_HORIZON)
        .then(|| format!("n_max={n_max} is below {TARGET_HORIZON}; thresholds are calibrated for the full horizon"))
}

fn asclt(ctx: &Context) -> Result<SuiteOutcome, CliError> {
    let n_max = ctx.cfg.horizon.n_max;
    let cov = ctx.series()?;
    let seed = ctx.seed(Suite::Asclt);
    let scalar = asclt_scalar_suite(&ctx.model, &ctx.d, &cov, n_max, derive_seed(seed, 1))?;
    let gaussian = gaussian_scalar_lane(&cov, n_max, derive_seed(seed, 2))?;
    let mut o = outcome(crate::worst([scalar.status, gaussian.status]), json!({"r11": cov.r11(), "lanes": [scalar, gaussian]}));
    o.warnings.extend(short_horizon_warning(n_max));
    o.constants = vec![
        fixed("scalar_threshold", SCALAR_THRESHOLD),
        fixed("gaussian_lane_threshold", GAUSSIAN_LANE_THRESHOLD),
        configured("n_max", n_max as f64),
    ];
    Ok(o)
}

fn arcsine(ctx: &Context) -> Result<SuiteOutcome, CliError> {
    let n_max = ctx.cfg.horizon.n_max;
    let opts = &ctx.cfg.arcsine;
    let seed = ctx.seed(Suite::Arcsine);
    let mut o = if ctx.d.arity() == 1 {
        let report = asclt_arcsine_suite(&ctx.model, &ctx.d, &ArcsineCdf, n_max, derive_seed(seed, 1), CLASSICAL_ARCSINE_THRESHOLD)?;
        let mut o = outcome(report.status, json!({"reference": "arcsine", "lane": report}));
        o.constants = vec![fixed("threshold", CLASSICAL_ARCSINE_THRESHOLD)];
        o
    } else {
        let cov = ctx.series()?;
        let reference = arcsine_reference(&cov, opts.grid_step, opts.reference_replicas, derive_seed(seed, 2))?;
        let report = asclt_arcsine_suite(&ctx.model, &ctx.d, &reference.cdf, n_max, derive_seed(seed, 1), ARCSINE_THRESHOLD)?;
        let distance_from_classical = reference.cdf.ks_distance(&ArcsineCdf);
        let mut o = outcome(
            report.status,
            json!({
                "reference": "simulated",
                "reference_replicas": opts.reference_replicas,
                "reference_grid_step": reference.grid_step,
                "reference_ks_from_arcsine": distance_from_classical,
                "reference_mean": mean(&reference.samples),
                "lane": report,
            }),
        );
        o.constants = vec![
            fixed("threshold", ARCSINE_THRESHOLD),
            configured("reference_replicas", opts.reference_replicas as f64),
            configured("grid_step", opts.grid_step),
        ];
        o
    };
    o.warnings.extend(short_horizon_warning(n_max));
    o.constants.push(configured("n_max", n_max as f64));
    Ok(o)
}

fn lil(ctx: &Context) -> Result<SuiteOutcome, CliError> {
    let n_max = ctx.cfg.horizon.n_max;
    let opts = &ctx.cfg.lil;
    let cov = ctx.series()?;
    let r11 = cov.r11();
    let seed = ctx.seed(Suite::Lil);
    let l = ctx.d.arity();
    let sups = map_replicas(opts.runs, derive_seed(seed, 1), |_, rng| {
        let traj = ctx.model.sample_with(l * n_max, rng)?;
        lil_sup(&xi_values(&ctx.d, &traj, n_max)?, r11)
    })
    .into_iter()
    .collect::<Result<Vec<f64>, _>>()?;
    let inside = |v: &f64| *v >= opts.lower && *v <= opts.upper;
    let count = sups.iter().filter(|v| inside(v)).count();

    let gaussian = if opts.gaussian_lane {
        let root = factor(&cov)?;
        let g = map_replicas(opts.runs, derive_seed(seed, 2), |_, rng| lil_sup(&sample_q_uniform(&root, 1.0, n_max, rng), r11))
            .into_iter()
            .collect::<Result<Vec<f64>, _>>()?;
        Some(g)
    } else {
        None
    };
    let gaussian_count = gaussian.as_ref().map(|g| g.iter().filter(|v| inside(v)).count());

    let mut csv = String::from("run,xi_sup,gaussian_sup\n");
    for (k, v) in sups.iter().enumerate() {
        let g = gaussian.as_ref().map_or(String::new(), |g| format!("{:e}", g[k]));
        csv.push_str(&format!("{k},{v:e},{g}\n"));
    }
    let mut o = outcome(
        verdict(count >= opts.min_inside),
        json!({
            "r11": r11,
            "n_max": n_max,
            "sups": sups,
            "inside": count,
            "gaussian_sups": gaussian,
            "gaussian_inside": gaussian_count,
        }),
    );
    o.warnings.extend(short_horizon_warning(n_max));
    o.constants = vec![
        configured("lower", opts.lower),
        configured("upper", opts.upper),
        configured("min_inside", opts.min_inside as f64),
        configured("runs", opts.runs as f64),
    ];
    o.files.push(("lil.csv".into(), csv.into_bytes()));
    Ok(o)
}

fn blocks(ctx: &Context) -> Result<SuiteOutcome, CliError> {
    const SE_MARGIN: f64 = 3.0;
    let b = &ctx.cfg.blocks;
    let grid = dyadic_grid(b.grid_lo, b.grid_hi);
    let t_max = *grid.last().expect("grid");
    let schedule = schedule_covering(b.eta, b.theta, b.tau, t_max, b.delta)?;
    let report = negligibility_diagnostic(&ctx.d, &ctx.model, &schedule, &grid, b.replicas, ctx.seed(Suite::Blocks))?;
    let ok = report.components.iter().all(|c| c.decays(SE_MARGIN));
    let mut schedule_csv = Vec::new();
    schedule.write_csv(&mut schedule_csv)?;
    let mut o = outcome(verdict(ok), serde_json::to_value(&report).expect("report serializes"));
    if report.exceeds_delta_bound == Some(true) {
        o.warnings.push(format!("tau={} is not below delta/4", b.tau));
    }
    o.constants = vec![fixed("se_margin", SE_MARGIN), configured("replicas", b.replicas as f64)];
    o.files.push(("schedule.csv".into(), schedule_csv));
    Ok(o)
}

fn mixing(ctx: &Context) -> Result<SuiteOutcome, CliError> {
    let opts = &ctx.cfg.mixing;
    let f = &ctx.cfg.function;
    let (report, profile) = match opts.exponents {
        Some(e) => {
            let params = e.with_function(f);
            let profile = mixing_profile(&ctx.model, opts.depth, &required_moments(&params))?;
            (Some(check_assumption(&profile, &params)), profile)
        }
        None => {
            let profile = mixing_profile(&ctx.model, opts.depth, &[])?;
            let d = (f.dim * (f.arity - 1)) as f64;
            (search_parameters(&profile, f.holder.iota, f.holder.kappa, d), profile)
        }
    };
    let status = match report.as_ref().map(|r| r.status) {
        Some(ClauseStatus::Pass) => Status::Pass,
        Some(ClauseStatus::Inconclusive) => Status::Inconclusive,
        Some(ClauseStatus::Fail) | None => Status::Fail,
    };
    let mut csv = Vec::new();
    profile.write_csv(&mut csv)?;
    let mut o = outcome(status, json!({"profile": profile, "assumption": report}));
    if report.is_none() {
        o.warnings.push("no exponents on the search grid satisfy every clause".into());
    }
    o.constants = vec![configured("depth", opts.depth as f64)];
    o.files.push(("mixing.csv".into(), csv));
    Ok(o)
}

/// Threshold used by [`arcsine`] for the given arity.
pub fn arcsine_threshold(arity: usize) -> f64 {
    if arity == 1 {
        CLASSICAL_ARCSINE_THRESHOLD
    } else {
        ARCSINE_THRESHOLD
    }
}
