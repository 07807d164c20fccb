//! Metadata for built-in models and functions.

use std::fmt::Write;
use std::path::Path;

use nonconv_core::mixing::mixing_profile;
use nonconv_core::{FunctionSpec, ModelSpec, ProcessModel};

use crate::CliError;

const MODELS: [&str; 3] = ["two-state", "bernoulli", "cyclic"];
const FUNCTIONS: [&str; 2] = ["product", "first-coordinate"];

fn builtin_model(name: &str) -> Option<ModelSpec> {
    match name {
        "two-state" => Some(ModelSpec::TwoState { a: 0.3, b: 0.3 }),
        "bernoulli" => Some(ModelSpec::Bernoulli { p: 0.5 }),
        "cyclic" => Some(ModelSpec::FiniteMarkov {
            transition: vec![vec![0.1, 0.6, 0.3], vec![0.3, 0.1, 0.6], vec![0.6, 0.3, 0.1]],
            observable: None,
        }),
        _ => None,
    }
}

fn builtin_function(name: &str) -> Option<FunctionSpec> {
    match name {
        "product" => Some(FunctionSpec::product(2)),
        "first-coordinate" => Some(FunctionSpec::first_coordinate(2)),
        _ => None,
    }
}

/// Names accepted by [`describe`] besides JSON files.
pub fn entities() -> Vec<&'static str> {
    MODELS.iter().chain(&FUNCTIONS).copied().collect()
}

/// Describes a built-in entity or a JSON file holding a model or function.
pub fn describe(entity: &str) -> Result<String, CliError> {
    if let Some(spec) = builtin_model(entity) {
        return describe_model(spec);
    }
    if let Some(f) = builtin_function(entity) {
        return describe_function(&f);
    }
    let path = Path::new(entity);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(e.to_string()))?;
        if let Ok(spec) = serde_json::from_str::<ModelSpec>(&text) {
            return describe_model(spec);
        }
        if let Ok(f) = FunctionSpec::from_json(&text) {
            return describe_function(&f);
        }
    }
    Err(CliError::UnknownEntity(format!("{entity} (known: {})", entities().join(", "))))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn describe_model(spec: ModelSpec) -> Result<String, CliError> {
    let model = ProcessModel::from_spec(spec.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", model.label());
    let _ = writeln!(s, "spec: {}", serde_json::to_string(&spec).expect("spec serializes"));
    if let Some(law) = model.marginal().as_finite() {
        let support: Vec<f64> = law.support.iter().map(|x| x[0]).collect();
        let _ = writeln!(s, "marginal support: {}", fmt_vec(&support));
        let _ = writeln!(s, "marginal probs: {}", fmt_vec(&law.probs));
    }
    if let Some((_, pi)) = model.chain() {
        let _ = writeln!(s, "pi: {}", fmt_vec(pi));
        let _ = writeln!(s, "lambda_2: {:.6}", model.second_eigenvalue_modulus()?);
        let profile = mixing_profile(&model, 5, &[])?;
        let _ = writeln!(s, "psi(1..5): {}", fmt_vec(&profile.psi[1..]));
    }
    Ok(s)
}

fn describe_function(f: &FunctionSpec) -> Result<String, CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "function: arity {}, dim {}", f.arity, f.dim);
    let _ = writeln!(s, "spec: {}", serde_json::to_string(f).expect("spec serializes"));
    let _ = writeln!(s, "holder: iota={}, kappa={}, k={}", f.holder.iota, f.holder.kappa, f.holder.constant);
    Ok(s)
}
