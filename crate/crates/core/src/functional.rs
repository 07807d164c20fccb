//! The summand function `F(x_1, ..., x_l)` and its martingale-friendly
//! decomposition `F - Fbar = F_1(x_1) + F_2(x_1, x_2) + ... + F_l(x_1..x_l)`.
//!
//! With `G_k(x_1..x_k) = \int F d mu(x_{k+1}) ... d mu(x_l)` (so `G_l = F` and
//! `G_0 = Fbar`), the components are `F_i = G_i - G_{i-1}`. Each `F_i`
//! integrates to zero in its last argument for every fixed prefix, and the
//! components telescope back to `F - Fbar`.
//!
//! Over a finite alphabet every `G_k` is a dense table of size `s^k` obtained
//! by contracting the last coordinate of `G_{k+1}` against `mu`. For
//! continuous marginals the supported rules factor over arguments, so the
//! partial integrals reduce to per-argument averages over a fixed Monte
//! Carlo sample of `mu`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{FiniteLaw, Marginal};
use crate::replica::replica_rng;
use crate::stats::CompensatedSum;

/// Upper bound on `s^l` for tabulated decompositions.
pub const MAX_TUPLE_SPACE: u128 = 100_000_000;
/// Sample tuples used for continuous marginals.
pub const MONTE_CARLO_POINTS: usize = 100_000;
const MONTE_CARLO_SEED: u64 = 0x00de_c0de;

/// Hölder/growth metadata `(iota, kappa, K)`, recorded verbatim.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderMeta {
    pub iota: f64,
    pub kappa: f64,
    #[serde(rename = "k")]
    pub constant: f64,
}

impl Default for HolderMeta {
    fn default() -> Self {
        Self { iota: 2.0, kappa: 1.0, constant: 1.0 }
    }
}

/// One term `coef * prod x^powers` of a polynomial; `powers` runs over all
/// `l * dim` coordinates, argument-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// How `F` is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalRule {
    /// Product of every coordinate of every argument.
    Product,
    /// `prod_j 1[x_j in A]` for the box `A = [lower, upper]`.
    IndicatorProduct { lower: Vec<f64>, upper: Vec<f64> },
    Polynomial { terms: Vec<Monomial> },
    /// Explicit values over `alphabet^l`, first argument most significant.
    DenseTable { alphabet: Vec<Vec<f64>>, values: Vec<f64> },
}

/// The function `F` together with its arity, argument dimension and
/// regularity metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub arity: usize,
    #[serde(default = "one")]
    pub dim: usize,
    pub rule: EvalRule,
    #[serde(default)]
    pub holder: HolderMeta,
}

fn one() -> usize {
    1
}

/// Outcome of the random growth-bound spot check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub checked: usize,
    pub violations: usize,
    pub worst_ratio: f64,
}

impl FunctionSpec {
    pub fn new(arity: usize, dim: usize, rule: EvalRule, holder: HolderMeta) -> Result<Self> {
        let spec = Self { arity, dim, rule, holder };
        spec.validate()?;
        Ok(spec)
    }

    /// `x_1 * x_2 * ... * x_l` on scalar arguments.
    pub fn product(arity: usize) -> Self {
        Self { arity, dim: 1, rule: EvalRule::Product, holder: HolderMeta { iota: arity as f64, ..HolderMeta::default() } }
    }

    pub fn constant(arity: usize, value: f64) -> Self {
        let rule = EvalRule::Polynomial { terms: vec![Monomial { coef: value, powers: vec![0; arity] }] };
        Self { arity, dim: 1, rule, holder: HolderMeta { iota: 0.0, kappa: 1.0, constant: value.abs().max(1.0) } }
    }

    /// `F = x_1`, ignoring the remaining arguments.
    pub fn first_coordinate(arity: usize) -> Self {
        let mut powers = vec![0; arity];
        powers[0] = 1;
        let rule = EvalRule::Polynomial { terms: vec![Monomial { coef: 1.0, powers }] };
        Self { arity, dim: 1, rule, holder: HolderMeta { iota: 1.0, ..HolderMeta::default() } }
    }

    pub fn dense_table(arity: usize, alphabet: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let dim = alphabet.first().map_or(1, Vec::len);
        let bound = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        Self::new(
            arity,
            dim,
            EvalRule::DenseTable { alphabet, values },
            HolderMeta { iota: 0.0, kappa: 1.0, constant: bound },
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::InvalidFunction(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFunction(msg));
        if self.arity == 0 || self.dim == 0 {
            return bad("arity and dimension must be positive".into());
        }
        let HolderMeta { iota, kappa, constant } = self.holder;
        if !(iota >= 0.0) || !(kappa > 0.0 && kappa <= 1.0) || !(constant > 0.0) {
            return bad(format!("metadata out of range: iota={iota}, kappa={kappa}, K={constant}"));
        }
        match &self.rule {
            EvalRule::Product => {}
            EvalRule::IndicatorProduct { lower, upper } => {
                if lower.len() != self.dim || upper.len() != self.dim {
                    return bad("indicator box must match the argument dimension".into());
                }
            }
            EvalRule::Polynomial { terms } => {
                let width = self.arity * self.dim;
                if let Some(t) = terms.iter().find(|t| t.powers.len() != width || !t.coef.is_finite()) {
                    return bad(format!("monomial {t:?} must carry {width} finite powers"));
                }
            }
            EvalRule::DenseTable { alphabet, values } => {
                if alphabet.is_empty() || alphabet.iter().any(|a| a.len() != self.dim) {
                    return bad("table alphabet entries must match the argument dimension".into());
                }
                let expected = (alphabet.len() as u128).checked_pow(self.arity as u32);
                if expected != Some(values.len() as u128) {
                    return bad(format!(
                        "table has {} values but the tuple space has {} entries",
                        values.len(),
                        alphabet.len().pow(self.arity as u32)
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("table values must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Evaluates `F` on the concatenated arguments `x = (x_1, ..., x_l)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let width = self.arity * self.dim;
        if x.len() != width {
            return Err(Error::ArityMismatch { expected: width, got: x.len() });
        }
        Ok(match &self.rule {
            EvalRule::Product => x.iter().product(),
            EvalRule::IndicatorProduct { lower, upper } => {
                let inside = x.chunks(self.dim).all(|arg| {
                    arg.iter().zip(lower.iter().zip(upper)).all(|(v, (lo, hi))| lo <= v && v <= hi)
                });
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            EvalRule::Polynomial { terms } => terms
                .iter()
                .map(|t| t.coef * x.iter().zip(&t.powers).map(|(v, &p)| v.powi(p as i32)).product::<f64>())
                .sum(),
            EvalRule::DenseTable { alphabet, values } => {
                let mut idx = 0usize;
                for arg in x.chunks(self.dim) {
                    let pos = alphabet.iter().position(|a| a.as_slice() == arg).ok_or_else(|| {
                        Error::InvalidFunction(format!("argument {arg:?} is outside the table alphabet"))
                    })?;
                    idx = idx * alphabet.len() + pos;
                }
                values[idx]
            }
        })
    }

    /// Checks `|F(x)| <= K (1 + sum_j |x_j|^iota)` on `samples` tuples drawn
    /// from `mu^l`.
    pub fn growth_check(&self, mu: &Marginal, samples: usize, seed: u64) -> Result<GrowthCheck> {
        let mut rng = replica_rng(seed, 0);
        let mut violations = 0;
        let mut worst = 0.0f64;
        let mut x = Vec::with_capacity(self.arity * self.dim);
        for _ in 0..samples {
            x.clear();
            for _ in 0..self.arity {
                x.extend_from_slice(mu.draw(&mut rng));
            }
            let f = self.eval(&x)?;
            let bound = self.holder.constant
                * (1.0
                    + x.chunks(self.dim)
                        .map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt().powf(self.holder.iota))
                        .sum::<f64>());
            let ratio = f.abs() / bound;
            worst = worst.max(ratio);
            if ratio > 1.0 {
                violations += 1;
            }
        }
        Ok(GrowthCheck { checked: samples, violations, worst_ratio: worst })
    }

    /// Pointwise linear combination `a F + b G` of two table functions over
    /// the same alphabet.
    pub fn combine_tables(a: f64, f: &Self, b: f64, g: &Self) -> Result<Self> {
        match (&f.rule, &g.rule) {
            (
                EvalRule::DenseTable { alphabet: af, values: vf },
                EvalRule::DenseTable { alphabet: ag, values: vg },
            ) if af == ag && f.arity == g.arity => {
                let values = vf.iter().zip(vg).map(|(x, y)| a * x + b * y).collect();
                Self::dense_table(f.arity, af.clone(), values)
            }
            _ => Err(Error::InvalidFunction("only dense tables over a common alphabet combine".into())),
        }
    }
}

/// `F` split into its centered components.
#[derive(Clone, Debug)]
pub struct DecomposedFunction {
    arity: usize,
    f_bar: f64,
    f_bar_std_error: f64,
    repr: Repr,
}

#[derive(Clone, Debug)]
enum Repr {
    Table {
        law: FiniteLaw,
        /// `components[i-1]` is the table of `F_i`, size `s^i`.
        components: Vec<Vec<f64>>,
        /// `F - Fbar` over `s^l`.
        centered: Vec<f64>,
    },
    Factorized(Factorized),
}

/// Non-table rules are sums of products of per-argument factors, so every
/// partial integral reduces to per-argument moments of `mu`.
#[derive(Clone, Debug)]
struct Factorized {
    dim: usize,
    terms: Vec<Term>,
}

#[derive(Clone, Debug)]
struct Term {
    coef: f64,
    factors: Vec<Factor>,
    /// `tail[k] = prod_{j >= k} E factor_j`, length `l + 1`.
    tail: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Factor {
    Powers(Vec<u32>),
    Indicator { lower: Vec<f64>, upper: Vec<f64> },
}

impl Factor {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Factor::Powers(p) => x.iter().zip(p).map(|(v, &k)| v.powi(k as i32)).product(),
            Factor::Indicator { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper)).all(|(v, (lo, hi))| lo <= v && v <= hi);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl Factorized {
    fn new(spec: &FunctionSpec, points: &[Vec<f64>]) -> Result<Self> {
        let (l, d) = (spec.arity, spec.dim);
        let raw: Vec<(f64, Vec<Factor>)> = match &spec.rule {
            EvalRule::Product => vec![(1.0, vec![Factor::Powers(vec![1; d]); l])],
            EvalRule::IndicatorProduct { lower, upper } => {
                vec![(1.0, vec![Factor::Indicator { lower: lower.clone(), upper: upper.clone() }; l])]
            }
            EvalRule::Polynomial { terms } => terms
                .iter()
                .map(|t| (t.coef, t.powers.chunks(d).map(|c| Factor::Powers(c.to_vec())).collect()))
                .collect(),
            EvalRule::DenseTable { .. } => {
                return Err(Error::InvalidFunction("a dense table needs a finite marginal".into()))
            }
        };
        let mean_of = |f: &Factor| points.iter().map(|x| f.eval(x)).collect::<CompensatedSum>().value() / points.len() as f64;
        let terms = raw
            .into_iter()
            .map(|(coef, factors)| {
                let mut tail = vec![1.0; l + 1];
                for k in (0..l).rev() {
                    tail[k] = tail[k + 1] * mean_of(&factors[k]);
                }
                Term { coef, factors, tail }
            })
            .collect();
        Ok(Self { dim: d, terms })
    }

    /// `G_k(x_1..x_k)` for the concatenated prefix `args`.
    fn partial(&self, args: &[f64], k: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let head: f64 = args.chunks(self.dim).take(k).zip(&t.factors).map(|(x, f)| f.eval(x)).product();
                t.coef * head * t.tail[k]
            })
            .sum()
    }
}

fn tuple_space(s: usize, arity: usize) -> Result<usize> {
    let size = (s as u128).checked_pow(arity as u32).unwrap_or(u128::MAX);
    if size > MAX_TUPLE_SPACE {
        return Err(Error::TupleSpaceTooLarge { size, limit: MAX_TUPLE_SPACE });
    }
    Ok(size as usize)
}

fn full_table(spec: &FunctionSpec, law: &FiniteLaw) -> Result<Vec<f64>> {
    if law.dim() != spec.dim {
        return Err(Error::InvalidFunction(format!(
            "function expects {}-dimensional arguments, marginal is {}-dimensional",
            spec.dim,
            law.dim()
        )));
    }
    let s = law.len();
    let size = tuple_space(s, spec.arity)?;
    let mut table = Vec::with_capacity(size);
    let mut digits = vec![0usize; spec.arity];
    let mut x = Vec::with_capacity(spec.arity * spec.dim);
    for _ in 0..size {
        x.clear();
        for &d in &digits {
            x.extend_from_slice(&law.support[d]);
        }
        let v = spec.eval(&x)?;
        if !v.is_finite() {
            return Err(Error::InvalidFunction(format!("F is not finite at {x:?}")));
        }
        table.push(v);
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < s {
                break;
            }
            *d = 0;
        }
    }
    Ok(table)
}

/// Integrates the last coordinate of a table over `s^k` against `probs`.
fn contract_last(table: &[f64], probs: &[f64]) -> Vec<f64> {
    let s = probs.len();
    table
        .chunks(s)
        .map(|row| row.iter().zip(probs).map(|(v, p)| v * p).collect::<CompensatedSum>().value())
        .collect()
}

fn sample_nodes(spec: &FunctionSpec, mu: &Marginal, count: usize) -> Vec<Vec<f64>> {
    let mut rng = replica_rng(MONTE_CARLO_SEED, 0);
    (0..count)
        .map(|_| {
            let mut node = Vec::with_capacity(spec.arity * spec.dim);
            for _ in 0..spec.arity {
                node.extend_from_slice(mu.draw(&mut rng));
            }
            node
        })
        .collect()
}

/// `\int F d mu^l`: an exact finite sum for finite alphabets, otherwise a
/// product of per-argument averages over the stored sample of `mu`.
pub fn f_bar(spec: &FunctionSpec, mu: &Marginal) -> Result<f64> {
    spec.validate()?;
    match mu {
        Marginal::Finite(law) => {
            let mut g = full_table(spec, law)?;
            for _ in 0..spec.arity {
                g = contract_last(&g, &law.probs);
            }
            Ok(g[0])
        }
        Marginal::Sampled(law) => Ok(Factorized::new(spec, &law.points)?.partial(&[], 0)),
    }
}

/// Builds `Fbar` and the components `F_1, ..., F_l`.
pub fn decompose(spec: &FunctionSpec, mu: &Marginal) -> Result<DecomposedFunction> {
    decompose_with_samples(spec, mu, MONTE_CARLO_POINTS)
}

/// As [`decompose`], with an explicit Monte Carlo sample count for
/// continuous marginals (ignored for finite alphabets).
pub fn decompose_with_samples(spec: &FunctionSpec, mu: &Marginal, samples: usize) -> Result<DecomposedFunction> {
    spec.validate()?;
    let arity = spec.arity;
    match mu {
        Marginal::Finite(law) => {
            let full = full_table(spec, law)?;
            // partials[k] = G_k, k = 0..=l
            let mut partials = vec![full];
            for _ in 0..arity {
                let next = contract_last(partials.last().expect("nonempty"), &law.probs);
                partials.push(next);
            }
            partials.reverse();
            let f_bar = partials[0][0];
            let s = law.len();
            let components = (1..=arity)
                .map(|i| {
                    partials[i].iter().enumerate().map(|(idx, g)| g - partials[i - 1][idx / s]).collect()
                })
                .collect();
            let centered = partials[arity].iter().map(|v| v - f_bar).collect();
            Ok(DecomposedFunction {
                arity,
                f_bar,
                f_bar_std_error: 0.0,
                repr: Repr::Table { law: law.clone(), components, centered },
            })
        }
        Marginal::Sampled(law) => {
            if samples < 2 {
                return Err(Error::TooFewSamples { needed: 2, got: samples });
            }
            let points = &law.points[..samples.min(law.points.len())];
            let fact = Factorized::new(spec, points)?;
            // The standard error is that of a plain average of F over
            // independent tuples drawn from the same sample.
            let values = sample_nodes(spec, mu, samples).iter().map(|n| spec.eval(n)).collect::<Result<Vec<_>>>()?;
            Ok(DecomposedFunction {
                arity,
                f_bar: fact.partial(&[], 0),
                f_bar_std_error: crate::stats::standard_error(&values),
                repr: Repr::Factorized(fact),
            })
        }
    }
}

impl DecomposedFunction {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn f_bar(&self) -> f64 {
        self.f_bar
    }

    /// Monte Carlo standard error of `Fbar` (zero for exact tables).
    pub fn f_bar_std_error(&self) -> f64 {
        self.f_bar_std_error
    }

    /// The finite marginal the tables are built on, if any.
    pub fn finite_law(&self) -> Option<&FiniteLaw> {
        match &self.repr {
            Repr::Table { law, .. } => Some(law),
            Repr::Factorized(_) => None,
        }
    }

    /// Table of `F_i` over `s^i` (first argument most significant).
    pub fn component_table(&self, i: usize) -> Option<&[f64]> {
        match &self.repr {
            Repr::Table { components, .. } if (1..=self.arity).contains(&i) => Some(&components[i - 1]),
            _ => None,
        }
    }

    /// Table of `F - Fbar` over `s^l`.
    pub fn centered_table(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Table { centered, .. } => Some(centered),
            Repr::Factorized(_) => None,
        }
    }

    /// `F_i(args)` with `args` the concatenation of `i` arguments.
    pub fn eval_component(&self, i: usize, args: &[f64]) -> Result<f64> {
        if !(1..=self.arity).contains(&i) {
            return Err(Error::ArityMismatch { expected: self.arity, got: i });
        }
        match &self.repr {
            Repr::Table { law, components, .. } => {
                let dim = law.dim();
                if args.len() != i * dim {
                    return Err(Error::ArityMismatch { expected: i * dim, got: args.len() });
                }
                let mut idx = 0usize;
                for arg in args.chunks(dim) {
                    let pos = law.index_of(arg).ok_or_else(|| {
                        Error::InvalidArgument(format!("argument {arg:?} outside the marginal support"))
                    })?;
                    idx = idx * law.len() + pos;
                }
                Ok(components[i - 1][idx])
            }
            Repr::Factorized(fact) => {
                let dim = fact.dim;
                if args.len() != i * dim {
                    return Err(Error::ArityMismatch { expected: i * dim, got: args.len() });
                }
                Ok(fact.partial(args, i) - fact.partial(args, i - 1))
            }
        }
    }

    /// `F_i` evaluated on alphabet symbols.
    #[inline]
    pub fn component_by_symbols(&self, i: usize, symbols: &[u32]) -> f64 {
        match &self.repr {
            Repr::Table { law, components, .. } => {
                let s = law.len();
                let idx = symbols.iter().fold(0usize, |acc, &x| acc * s + x as usize);
                components[i - 1][idx]
            }
            Repr::Factorized(_) => panic!("symbol evaluation requires a tabulated decomposition"),
        }
    }

    /// `F(args) - Fbar` for the full `l`-tuple.
    pub fn eval_centered(&self, args: &[f64]) -> Result<f64> {
        match &self.repr {
            Repr::Table { law, centered, .. } => {
                let dim = law.dim();
                if args.len() != self.arity * dim {
                    return Err(Error::ArityMismatch { expected: self.arity * dim, got: args.len() });
                }
                let mut idx = 0usize;
                for arg in args.chunks(dim) {
                    let pos = law.index_of(arg).ok_or_else(|| {
                        Error::InvalidArgument(format!("argument {arg:?} outside the marginal support"))
                    })?;
                    idx = idx * law.len() + pos;
                }
                Ok(centered[idx])
            }
            Repr::Factorized(fact) => {
                if args.len() != self.arity * fact.dim {
                    return Err(Error::ArityMismatch { expected: self.arity * fact.dim, got: args.len() });
                }
                Ok(fact.partial(args, self.arity) - self.f_bar)
            }
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.repr, Repr::Table { .. })
    }
}
